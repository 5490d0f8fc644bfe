//! Python bindings: quorum arithmetic, the resilience calculator, the
//! latency constants, the replicated table, and a one-call simulator run.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fastpax::app::{Command, TableState, VALUE_LEN};
use fastpax::harness::{run_point, Algorithm, PointSpec};
use fastpax::quorum;
use fastpax::types::RoundKind;

fn variant(name: &str) -> PyResult<quorum::Variant> {
    quorum::Variant::parse(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown quorum variant `{name}`")))
}

/// Classic and fast quorum sizes for `n` replicas under a variant
/// ("classic" | "fast-uniform" | "fast-large").
#[pyfunction]
fn quorum_sizes(py: Python<'_>, n: usize, variant_name: &str) -> PyResult<Py<PyDict>> {
    let spec = quorum::quorum_spec(n, variant(variant_name)?)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("n", spec.n)?;
    d.set_item("variant", spec.variant.name())?;
    d.set_item("classic", spec.classic)?;
    d.set_item("fast", spec.fast)?;
    Ok(d.into())
}

/// Smallest replica count that keeps making progress with `f` failures.
#[pyfunction]
fn min_replicas_for_resilience(f: usize, variant_name: &str) -> PyResult<usize> {
    Ok(quorum::min_replicas_for_resilience(f, variant(variant_name)?))
}

/// The per-value vote count that forces a recovering coordinator's pick.
#[pyfunction]
fn pick_threshold(n: usize, variant_name: &str) -> PyResult<usize> {
    quorum::quorum_spec(n, variant(variant_name)?)
        .map_err(|e| PyValueError::new_err(e.to_string()))?
        .pick_threshold()
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// One-way message delays to the first decision: "classic" -> 3, "fast" -> 2.
#[pyfunction]
fn theoretical_delay(mode: &str) -> PyResult<u32> {
    let kind = match mode {
        "classic" => RoundKind::Classic,
        "fast" => RoundKind::Fast,
        _ => return Err(PyValueError::new_err(format!("unknown mode `{mode}`"))),
    };
    Ok(fastpax::sequencer::theoretical_delay(kind))
}

/// Run one simulated load point and return its summary. `algorithm` is one
/// of "paxos" | "fast-large" | "fast-small" | "paxos-big-quorum".
#[pyfunction]
#[pyo3(signature = (algorithm, n, rate, duration_s, seed=1))]
fn run_sim(
    py: Python<'_>,
    algorithm: &str,
    n: usize,
    rate: u64,
    duration_s: u64,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let algorithm = Algorithm::parse(algorithm)
        .ok_or_else(|| PyValueError::new_err(format!("unknown algorithm `{algorithm}`")))?;
    let spec = PointSpec::new(algorithm, n, rate, duration_s, seed);
    let r = run_point(&spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("offered", r.offered)?;
    d.set_item("served", r.served)?;
    d.set_item("rejected", r.rejected)?;
    d.set_item("pending", r.pending)?;
    d.set_item("served_rate", r.summary.served_rate)?;
    d.set_item("mean_rt_ms", r.summary.mean_rt_ms)?;
    d.set_item("total_instances", r.summary.total_inst)?;
    d.set_item("retried", r.summary.retried)?;
    d.set_item("collisions", r.summary.collisions)?;
    Ok(d.into())
}

/// The replicated hash table's local state: integer keys, 5-character
/// values, and an order-sensitive state digest.
#[pyclass]
struct Table {
    state: TableState,
}

#[pymethods]
impl Table {
    #[new]
    fn new() -> Table {
        Table { state: TableState::default() }
    }

    fn put(&mut self, key: u64, value: &str) -> PyResult<()> {
        let bytes: [u8; VALUE_LEN] = value
            .as_bytes()
            .try_into()
            .map_err(|_| PyValueError::new_err(format!("value must be {VALUE_LEN} bytes")))?;
        self.state.apply(&Command::put(key, bytes));
        Ok(())
    }

    fn read(&self, key: u64) -> Option<String> {
        self.state.read(key).map(|v| String::from_utf8_lossy(v).into_owned())
    }

    fn digest(&self) -> String {
        self.state.state_digest().0.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn applied_count(&self) -> u64 {
        self.state.applied_count()
    }

    fn __len__(&self) -> usize {
        self.state.len()
    }
}

#[pymodule]
fn fastpax_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(quorum_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(min_replicas_for_resilience, m)?)?;
    m.add_function(wrap_pyfunction!(pick_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_delay, m)?)?;
    m.add_function(wrap_pyfunction!(run_sim, m)?)?;
    m.add_class::<Table>()?;
    Ok(())
}
