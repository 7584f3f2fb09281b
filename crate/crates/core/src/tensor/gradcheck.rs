//! Central finite-difference gradient checking.

use super::{Gradients, Matrix, ParamStore};

/// Per-entry relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of `loss` with respect to every entry of every parameter.
pub fn numeric_gradients(
    store: &ParamStore,
    h: f64,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> Vec<Matrix> {
    let mut probe = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let (rows, cols) = store.get(id).shape();
        let mut g = Matrix::zeros(rows, cols);
        for k in 0..rows * cols {
            let orig = probe.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let plus = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig - h;
            let minus = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Central differences that also flag entries whose ±h probes land on a
/// different rectifier pattern than the unperturbed forward. Such entries
/// straddle a kink, where a finite difference does not estimate the derivative.
///
/// `loss` returns the loss and the pattern (see `Tape::relu_pattern`).
pub fn numeric_gradients_with_kinks(
    store: &ParamStore,
    h: f64,
    mut loss: impl FnMut(&ParamStore) -> (f64, Vec<bool>),
) -> (Vec<Matrix>, Vec<Vec<bool>>) {
    let (_, base) = loss(store);
    let mut probe = store.clone();
    let mut grads = Vec::with_capacity(store.len());
    let mut kinks = Vec::with_capacity(store.len());
    for id in store.ids() {
        let (rows, cols) = store.get(id).shape();
        let mut g = Matrix::zeros(rows, cols);
        let mut crossed = vec![false; rows * cols];
        for k in 0..rows * cols {
            let orig = probe.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let (plus, pp) = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig - h;
            let (minus, pm) = loss(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
            crossed[k] = pp != base || pm != base;
        }
        grads.push(g);
        kinks.push(crossed);
    }
    (grads, kinks)
}

/// Comparison summary for one named parameter block.
#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
    pub within_tolerance: usize,
    /// Entries excluded because the difference straddled a rectifier kink.
    pub skipped: usize,
}

impl BlockReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares analytic against numeric gradients block by block.
pub fn compare(
    store: &ParamStore,
    analytic: &Gradients,
    numeric: &[Matrix],
    tolerance: f64,
    floor: f64,
) -> Vec<BlockReport> {
    compare_excluding(store, analytic, numeric, &[], tolerance, floor)
}

/// Like [`compare`], skipping entries flagged in `excluded` (per block, may be empty).
pub fn compare_excluding(
    store: &ParamStore,
    analytic: &Gradients,
    numeric: &[Matrix],
    excluded: &[Vec<bool>],
    tolerance: f64,
    floor: f64,
) -> Vec<BlockReport> {
    store
        .ids()
        .zip(numeric)
        .enumerate()
        .map(|(b, (id, num))| {
            let skip = excluded.get(b);
            let errs: Vec<f64> = analytic
                .get(id)
                .data()
                .iter()
                .zip(num.data())
                .enumerate()
                .filter(|(k, _)| !skip.is_some_and(|s| s[*k]))
                .map(|(_, (&a, &n))| relative_error(a, n, floor))
                .collect();
            let entries = num.len();
            BlockReport {
                name: store.name(id).to_string(),
                entries,
                max_relative_error: errs.iter().copied().fold(0.0, f64::max),
                within_tolerance: errs.iter().filter(|&&e| e < tolerance).count(),
                skipped: entries - errs.len(),
            }
        })
        .collect()
}
