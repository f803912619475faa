//! Python bindings: the geometric estimators, the DEM metrics and the
//! on-disk pipeline.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use tilerecon::evaluation::{completeness, error_map, median_error, DemGrid};
use tilerecon::geometry::{
    factorize_two_view as factorize, fit_affine_upgrade as fit_upgrade, resect_camera as resect,
    triangulate_multiview,
};
use tilerecon::pipeline::{cmd_run, cmd_synth, RunConfig, Workspace};
use tilerecon::{AffineCamera, Correspondence2D2D, Correspondence2D3D, Point2, Point3};

create_exception!(tilerecon, ReconstructionError, PyException);

fn err(kind: &str, message: impl std::fmt::Display) -> PyErr {
    ReconstructionError::new_err(format!("{kind}: {message}"))
}

fn geometry_err(e: tilerecon::GeometryError) -> PyErr {
    err(e.kind(), &e)
}

/// 2x4 affine camera `x = M X + t`, parameters
/// `[m00, m01, m02, m10, m11, m12, t0, t1]`.
#[pyclass(name = "AffineCamera", module = "tilerecon", frozen)]
struct PyAffineCamera {
    inner: AffineCamera,
}

#[pymethods]
impl PyAffineCamera {
    #[new]
    fn new(params: [f64; 8]) -> PyResult<Self> {
        let c = AffineCamera::from_params(&params);
        AffineCamera::new(c.m, c.t).map(|inner| Self { inner }).map_err(geometry_err)
    }

    fn params(&self) -> [f64; 8] {
        self.inner.to_params()
    }

    fn project(&self, point: (f64, f64, f64)) -> (f64, f64) {
        let p = self.inner.project(&Point3::new(point.0, point.1, point.2));
        (p.x, p.y)
    }

    fn __repr__(&self) -> String {
        format!("AffineCamera({:?})", self.inner.to_params())
    }
}

fn p2(v: &[(f64, f64)]) -> Vec<Point2> {
    v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
}

fn p3(v: &[(f64, f64, f64)]) -> Vec<Point3> {
    v.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()
}

fn same_len(a: usize, b: usize) -> PyResult<()> {
    if a != b {
        return Err(err("InvalidInput", format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Closed-form two-view factorization of pixel correspondences `a[k] <-> b[k]`.
///
/// Returns `(camera_i, camera_j, points, singular_values, residual_sq)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn factorize_two_view(
    a: Vec<(f64, f64)>,
    b: Vec<(f64, f64)>,
) -> PyResult<(PyAffineCamera, PyAffineCamera, Vec<(f64, f64, f64)>, [f64; 4], f64)> {
    same_len(a.len(), b.len())?;
    let corrs: Vec<Correspondence2D2D> =
        p2(&a).into_iter().zip(p2(&b)).map(|(x, y)| Correspondence2D2D::new(x, y)).collect();
    let f = factorize(&corrs).map_err(geometry_err)?;
    Ok((
        PyAffineCamera { inner: f.camera_i },
        PyAffineCamera { inner: f.camera_j },
        f.points.iter().map(|p| (p.x, p.y, p.z)).collect(),
        f.singular_values,
        f.residual_sq,
    ))
}

/// Least-squares affine camera from 2D-3D correspondences.
#[pyfunction]
fn resect_camera(points: Vec<(f64, f64, f64)>, pixels: Vec<(f64, f64)>) -> PyResult<PyAffineCamera> {
    same_len(points.len(), pixels.len())?;
    let corrs: Vec<Correspondence2D3D> =
        p2(&pixels).into_iter().zip(p3(&points)).map(|(x, p)| Correspondence2D3D::new(x, p)).collect();
    resect(&corrs).map(|inner| PyAffineCamera { inner }).map_err(geometry_err)
}

/// Linear multi-view triangulation of one point.
#[pyfunction]
fn triangulate(cameras: Vec<PyRef<'_, PyAffineCamera>>, pixels: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    same_len(cameras.len(), pixels.len())?;
    let cams: Vec<AffineCamera> = cameras.iter().map(|c| c.inner).collect();
    let p = triangulate_multiview(&cams, &p2(&pixels)).map_err(geometry_err)?;
    Ok((p.x, p.y, p.z))
}

/// Affine map taking `affine[k]` to `euclidean[k]`, as the top three rows
/// of the 4x4 homogeneous matrix.
#[pyfunction]
fn fit_affine_upgrade(affine: Vec<(f64, f64, f64)>, euclidean: Vec<(f64, f64, f64)>) -> PyResult<[[f64; 4]; 3]> {
    same_len(affine.len(), euclidean.len())?;
    let pairs: Vec<(Point3, Point3)> = p3(&affine).into_iter().zip(p3(&euclidean)).collect();
    let h = fit_upgrade(&pairs).map_err(geometry_err)?.h;
    Ok(std::array::from_fn(|r| std::array::from_fn(|c| h[(r, c)])))
}

fn grid(rows: &[Vec<Option<f64>>]) -> PyResult<DemGrid> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(err("InvalidInput", "ragged grid"));
    }
    let mut g = DemGrid::empty((0.0, 0.0), 1.0, width, height).map_err(|e| err(e.kind(), &e))?;
    for (row, values) in rows.iter().enumerate() {
        for (col, v) in values.iter().enumerate() {
            g.set(col, row, *v);
        }
    }
    Ok(g)
}

/// `(median |error|, completeness %)` of two equally sized height grids
/// (`None` = no data).
#[pyfunction]
fn dem_metrics(test: Vec<Vec<Option<f64>>>, truth: Vec<Vec<Option<f64>>>, threshold: f64) -> PyResult<(f64, f64)> {
    let map = error_map(&grid(&test)?, &grid(&truth)?).map_err(|e| err(e.kind(), &e))?;
    let med = median_error(&map).map_err(|e| err(e.kind(), &e))?;
    let comp = completeness(&map, threshold).map_err(|e| err(e.kind(), &e))?;
    Ok((med, comp))
}

fn config(toml: Option<&str>) -> PyResult<RunConfig> {
    RunConfig::parse(toml.unwrap_or("")).map_err(|e| err(&e.kind, &e.message))
}

/// Writes the configured synthetic dataset into `workspace`.
#[pyfunction]
#[pyo3(signature = (workspace, config_toml = None))]
fn synthesize(workspace: &str, config_toml: Option<&str>) -> PyResult<()> {
    let cfg = config(config_toml)?;
    cmd_synth(&Workspace::new(Path::new(workspace)), &cfg).map_err(|e| ReconstructionError::new_err(e.to_string()))?;
    Ok(())
}

/// Runs every pipeline stage and returns the run report as JSON text.
#[pyfunction]
#[pyo3(signature = (workspace, config_toml = None))]
fn run_pipeline(workspace: &str, config_toml: Option<&str>) -> PyResult<String> {
    let cfg = config(config_toml)?;
    let (report, _) = cmd_run(&Workspace::new(Path::new(workspace)), &cfg).map_err(|e| ReconstructionError::new_err(e.to_string()))?;
    Ok(serde_json::to_string(&report).expect("report serializes"))
}

#[pymodule]
#[pyo3(name = "tilerecon")]
fn tilerecon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ReconstructionError", m.py().get_type::<ReconstructionError>())?;
    m.add_class::<PyAffineCamera>()?;
    m.add_function(wrap_pyfunction!(factorize_two_view, m)?)?;
    m.add_function(wrap_pyfunction!(resect_camera, m)?)?;
    m.add_function(wrap_pyfunction!(triangulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_affine_upgrade, m)?)?;
    m.add_function(wrap_pyfunction!(dem_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
