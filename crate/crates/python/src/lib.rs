//! Python bindings. Matrices are strided views shared with Python by
//! reference; factorizations overwrite their argument like the Rust API.

use famlies::control::{default_tree, enumerate_trees, parse_tree, ControlNode, OpKind};
use famlies::engine::{gemm as engine_gemm, KernelConfig};
use famlies::factor::{self, FactorError, PivotVector, Uplo};
use famlies::scalar::{DType, Scalar};
use famlies::tensor::{self, ContractionSpec, TensorView};
use famlies::views::{Layout, MatrixView};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIndexError, PyTypeError, PyValueError};
use pyo3::prelude::*;

create_exception!(famlies_py, FactorizationError, PyException);

#[derive(Clone)]
enum Data {
    F32(MatrixView<f32>),
    F64(MatrixView<f64>),
}

/// Calls `$body` with `$v` bound to the typed view of `$m`.
macro_rules! with_view {
    ($m:expr, $v:ident => $body:expr) => {
        match &$m.data {
            Data::F32($v) => $body,
            Data::F64($v) => $body,
        }
    };
}

fn parse_dtype(s: &str) -> PyResult<DType> {
    s.parse().map_err(|e: String| PyValueError::new_err(e))
}

fn factor_err(e: FactorError) -> PyErr {
    FactorizationError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Dense matrix view of `f32` or `f64` values.
#[pyclass(unsendable, name = "Matrix", module = "famlies_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMatrix {
    data: Data,
}

fn from_rows<T: Scalar>(rows: &[Vec<f64>]) -> PyResult<MatrixView<T>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(MatrixView::from_fn(rows.len(), n, Layout::ColMajor, |i, j| T::from_f64(rows[i][j])))
}

#[pymethods]
impl PyMatrix {
    #[new]
    #[pyo3(signature = (rows, dtype = "f64"))]
    fn new(rows: Vec<Vec<f64>>, dtype: &str) -> PyResult<Self> {
        let data = match parse_dtype(dtype)? {
            DType::F32 => Data::F32(from_rows(&rows)?),
            DType::F64 => Data::F64(from_rows(&rows)?),
        };
        Ok(Self { data })
    }

    #[staticmethod]
    #[pyo3(signature = (m, n, dtype = "f64"))]
    fn zeros(m: usize, n: usize, dtype: &str) -> PyResult<Self> {
        let data = match parse_dtype(dtype)? {
            DType::F32 => Data::F32(MatrixView::zeros(m, n, Layout::ColMajor)),
            DType::F64 => Data::F64(MatrixView::zeros(m, n, Layout::ColMajor)),
        };
        Ok(Self { data })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        with_view!(self, v => v.shape())
    }

    #[getter]
    fn dtype(&self) -> &'static str {
        with_view!(self, v => v.dtype().name())
    }

    fn __getitem__(&self, idx: (usize, usize)) -> PyResult<f64> {
        let (i, j) = idx;
        with_view!(self, v => {
            if i >= v.rows() || j >= v.cols() {
                return Err(PyIndexError::new_err(format!("({i}, {j}) outside {:?}", v.shape())));
            }
            Ok(v.get(i, j).to_f64())
        })
    }

    fn __setitem__(&self, idx: (usize, usize), value: f64) -> PyResult<()> {
        let (i, j) = idx;
        with_view!(self, v => {
            if i >= v.rows() || j >= v.cols() {
                return Err(PyIndexError::new_err(format!("({i}, {j}) outside {:?}", v.shape())));
            }
            v.set(i, j, Scalar::from_f64(value));
            Ok(())
        })
    }

    /// A view of the transpose sharing this matrix's storage.
    fn transposed(&self) -> Self {
        let data = match &self.data {
            Data::F32(v) => Data::F32(v.transposed()),
            Data::F64(v) => Data::F64(v.transposed()),
        };
        Self { data }
    }

    /// An independent copy.
    fn copy(&self) -> Self {
        let data = match &self.data {
            Data::F32(v) => Data::F32(v.copy_contents(Layout::ColMajor)),
            Data::F64(v) => Data::F64(v.copy_contents(Layout::ColMajor)),
        };
        Self { data }
    }

    fn tolist(&self) -> Vec<Vec<f64>> {
        with_view!(self, v => (0..v.rows()).map(|i| (0..v.cols()).map(|j| v.get(i, j).to_f64()).collect()).collect())
    }

    fn __repr__(&self) -> String {
        let (m, n) = self.shape();
        format!("Matrix({m}x{n}, dtype={})", self.dtype())
    }
}

/// A control tree selecting variants, block sizes and parallelism.
#[pyclass(name = "ControlTree", module = "famlies_py", from_py_object)]
#[derive(Clone)]
pub struct PyControlTree {
    node: ControlNode,
}

fn parse_op(op: &str) -> PyResult<OpKind> {
    op.parse().map_err(|e: String| PyValueError::new_err(e))
}

#[pymethods]
impl PyControlTree {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_tree(text).map(|node| Self { node }).map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (op, n, dtype = "f64"))]
    fn default(op: &str, n: usize, dtype: &str) -> PyResult<Self> {
        Ok(Self { node: default_tree(parse_op(op)?, n, parse_dtype(dtype)?) })
    }

    #[staticmethod]
    fn enumerate(op: &str, variants: Vec<u8>, bs: Vec<usize>, depth: usize) -> PyResult<Vec<Self>> {
        let trees = enumerate_trees(parse_op(op)?, &variants, &bs, depth).map_err(value_err)?;
        Ok(trees.into_iter().map(|node| Self { node }).collect())
    }

    fn to_json(&self) -> String {
        self.node.to_json()
    }

    fn descriptor(&self) -> String {
        self.node.descriptor()
    }

    fn with_ways(&self, ways: usize) -> Self {
        Self { node: self.node.clone().with_ways(ways) }
    }

    fn __repr__(&self) -> String {
        format!("ControlTree({})", self.node.descriptor())
    }
}

fn tree_or_default(tree: Option<PyControlTree>, op: OpKind, n: usize, dtype: DType) -> ControlNode {
    tree.map_or_else(|| default_tree(op, n, dtype), |t| t.node)
}

fn same_dtype(ms: &[&PyMatrix]) -> PyResult<DType> {
    let d = ms[0].dtype();
    if ms.iter().any(|m| m.dtype() != d) {
        return Err(PyTypeError::new_err("operands have different dtypes"));
    }
    parse_dtype(d)
}

/// `c := beta * c + alpha * a * b`.
#[pyfunction]
#[pyo3(signature = (alpha, a, b, beta, c, ways = 1))]
fn gemm(alpha: f64, a: &PyMatrix, b: &PyMatrix, beta: f64, c: &PyMatrix, ways: usize) -> PyResult<()> {
    same_dtype(&[a, b, c])?;
    match (&a.data, &b.data, &c.data) {
        (Data::F32(a), Data::F32(b), Data::F32(c)) => {
            engine_gemm(alpha as f32, a, b, beta as f32, c, &KernelConfig::default_for(DType::F32), ways)
        }
        (Data::F64(a), Data::F64(b), Data::F64(c)) => {
            engine_gemm(alpha, a, b, beta, c, &KernelConfig::default_for(DType::F64), ways)
        }
        _ => unreachable!("dtypes checked"),
    }
    .map_err(value_err)
}

/// Overwrites the chosen triangle of `a` with its Cholesky factor.
#[pyfunction]
#[pyo3(signature = (a, upper = false, tree = None))]
fn cholesky(a: &PyMatrix, upper: bool, tree: Option<PyControlTree>) -> PyResult<()> {
    let uplo = if upper { Uplo::Upper } else { Uplo::Lower };
    let (n, dt) = (a.shape().0, parse_dtype(a.dtype())?);
    let tree = tree_or_default(tree, OpKind::Cholesky, n, dt);
    with_view!(a, v => factor::cholesky(v, uplo, &tree)).map_err(factor_err)
}

/// In-place LU with partial pivoting; returns the pivot rows.
#[pyfunction]
#[pyo3(signature = (a, tree = None))]
fn lu(a: &PyMatrix, tree: Option<PyControlTree>) -> PyResult<Vec<usize>> {
    let tree = tree_or_default(tree, OpKind::Lu, a.shape().1, parse_dtype(a.dtype())?);
    let piv = with_view!(a, v => factor::lu_partial(v, &tree)).map_err(factor_err)?;
    Ok(piv.as_slice().to_vec())
}

/// Overwrites `b` with the solution of `A x = b` given `lu`'s output.
#[pyfunction]
fn lu_solve(factors: &PyMatrix, pivots: Vec<usize>, b: &PyMatrix) -> PyResult<()> {
    same_dtype(&[factors, b])?;
    let n = factors.shape().0;
    let piv = PivotVector::new(pivots, n).ok_or_else(|| PyValueError::new_err("invalid pivot vector"))?;
    match (&factors.data, &b.data) {
        (Data::F32(f), Data::F32(b)) => factor::lu_solve(f, &piv, b),
        (Data::F64(f), Data::F64(b)) => factor::lu_solve(f, &piv, b),
        _ => unreachable!("dtypes checked"),
    }
    .map_err(factor_err)
}

/// In-place Householder QR; returns the reflector scalars.
#[pyfunction]
#[pyo3(signature = (a, tree = None))]
fn qr(a: &PyMatrix, tree: Option<PyControlTree>) -> PyResult<Vec<f64>> {
    let tree = tree_or_default(tree, OpKind::Qr, a.shape().1, parse_dtype(a.dtype())?);
    with_view!(a, v => factor::qr_householder(v, &tree).map(|r| r.tau.iter().map(|t| t.to_f64()).collect()))
        .map_err(factor_err)
}

/// In-place pivoted LTL^T of a skew-symmetric matrix; returns the pivots
/// and the subdiagonal of T.
#[pyfunction]
#[pyo3(signature = (x, tree = None))]
fn ltlt(x: &PyMatrix, tree: Option<PyControlTree>) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let tree = tree_or_default(tree, OpKind::Ltlt, x.shape().0, parse_dtype(x.dtype())?);
    with_view!(x, v => factor::ltlt_pivoted(v, &tree)
        .map(|(p, t)| (p.as_slice().to_vec(), t.t.iter().map(|e| e.to_f64()).collect())))
    .map_err(factor_err)
}

/// Pfaffian of a skew-symmetric matrix; `x` is left factored.
#[pyfunction]
#[pyo3(signature = (x, tree = None))]
fn pfaffian(x: &PyMatrix, tree: Option<PyControlTree>) -> PyResult<f64> {
    let tree = tree_or_default(tree, OpKind::Ltlt, x.shape().0, parse_dtype(x.dtype())?);
    with_view!(x, v => factor::pfaffian(v, &tree).map(|p| p.to_f64())).map_err(factor_err)
}

/// Dense `f64` tensor, row-major on construction.
#[pyclass(unsendable, name = "Tensor", module = "famlies_py")]
pub struct PyTensor {
    inner: TensorView<f64>,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(dims: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        TensorView::from_vec(&dims, data).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn zeros(dims: Vec<usize>) -> PyResult<Self> {
        TensorView::zeros(&dims).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    /// Elements in row-major order of the logical index.
    fn tolist(&self) -> Vec<f64> {
        self.inner.to_vec()
    }

    fn __getitem__(&self, idx: Vec<usize>) -> PyResult<f64> {
        if idx.len() != self.inner.rank() || idx.iter().zip(self.inner.dims()).any(|(i, d)| i >= d) {
            return Err(PyIndexError::new_err(format!("{idx:?} outside {:?}", self.inner.dims())));
        }
        Ok(self.inner.get(&idx))
    }
}

/// `c := beta * c + alpha * einsum(spec, a, b)`.
#[pyfunction]
#[pyo3(signature = (spec, alpha, a, b, beta, c, ways = 1))]
fn contract(spec: &str, alpha: f64, a: &PyTensor, b: &PyTensor, beta: f64, c: &PyTensor, ways: usize) -> PyResult<()> {
    let spec: ContractionSpec = spec.parse().map_err(value_err)?;
    let cfg = KernelConfig::default_for(DType::F64);
    tensor::contract(alpha, &a.inner, &b.inner, beta, &c.inner, &spec, &cfg, ways).map_err(value_err)
}

#[pymodule]
fn famlies_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyControlTree>()?;
    m.add_class::<PyTensor>()?;
    m.add("FactorizationError", m.py().get_type::<FactorizationError>())?;
    m.add_function(wrap_pyfunction!(gemm, m)?)?;
    m.add_function(wrap_pyfunction!(cholesky, m)?)?;
    m.add_function(wrap_pyfunction!(lu, m)?)?;
    m.add_function(wrap_pyfunction!(lu_solve, m)?)?;
    m.add_function(wrap_pyfunction!(qr, m)?)?;
    m.add_function(wrap_pyfunction!(ltlt, m)?)?;
    m.add_function(wrap_pyfunction!(pfaffian, m)?)?;
    m.add_function(wrap_pyfunction!(contract, m)?)?;
    Ok(())
}
