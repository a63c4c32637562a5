use std::fmt::Write as _;

use super::kelm::{argmax, train_with_gram, KelmModel};
use super::{ensure_disjoint, fit_norm, gram, LabeledSet, NormMode};
use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, uar, uar_present, ConfusionMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub c: f64,
    pub accuracy: f64,
    pub uar: f64,
    /// Set when training failed at this C; the row is then never selected.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub mode: NormMode,
    pub rows: Vec<GridRow>,
    pub best_c: f64,
    pub best_uar: f64,
    /// Classes absent from the validation set; UAR averages over the rest.
    pub missing_classes: Vec<String>,
}

impl GridReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("norm\tC\taccuracy\tuar\tselected\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:e}\t{}\t{}\t{}",
                self.mode,
                r.c,
                if r.error.is_some() { "NA".into() } else { r.accuracy.to_string() },
                if r.error.is_some() { "NA".into() } else { r.uar.to_string() },
                u8::from(r.c == self.best_c)
            );
        }
        out
    }
}

/// Trains on `train` for every C in `grid` and scores UAR on `valid`.
///
/// The highest validation UAR wins; ties go to the smaller C.
pub fn grid_search(
    train: &LabeledSet,
    valid: &LabeledSet,
    classes: &[String],
    grid: &[f64],
    mode: NormMode,
) -> Result<GridReport> {
    if grid.is_empty() || grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::Config(format!("C grid must be non-empty and positive, got {grid:?}")));
    }
    if valid.is_empty() {
        return Err(Error::Precondition("validation set is empty".into()));
    }
    ensure_disjoint(train, valid, "train and valid sets")?;
    let norm = fit_norm(train.x.view(), mode.applies_l2())?;
    let zt = norm.apply_rows(train.x.view())?;
    let zv = norm.apply_rows(valid.x.view())?;
    let k = gram(zt.view(), zt.view())?;
    let kv = gram(zv.view(), zt.view())?;

    let mut missing = Vec::new();
    let mut rows = Vec::with_capacity(grid.len());
    for &c in grid {
        match train_with_gram(zt.clone(), &k, &train.y, classes, c, norm.clone()) {
            Ok(model) => {
                let pred: Vec<usize> = kv.dot(&model.beta).rows().into_iter().map(argmax).collect();
                let cm = ConfusionMatrix::from_indices(&valid.y, &pred, classes)?;
                missing = cm.empty_classes().iter().map(|s| s.to_string()).collect();
                rows.push(GridRow {
                    c,
                    accuracy: accuracy(&cm)?,
                    uar: uar_present(&cm)?,
                    error: None,
                });
            }
            Err(e @ Error::Numerical(_)) => {
                log::warn!("{mode} C = {c:e} skipped: {e}");
                rows.push(GridRow {
                    c,
                    accuracy: f64::NAN,
                    uar: f64::NAN,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        log::warn!("validation set lacks classes {missing:?}; UAR averages over the classes present");
    }
    let best = rows
        .iter()
        .filter(|r| r.error.is_none())
        .fold(None::<&GridRow>, |best, r| match best {
            Some(b) if r.uar < b.uar || (r.uar == b.uar && r.c >= b.c) => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::Numerical(format!("training failed for every C in the {mode} grid")))?;
    let (best_c, best_uar) = (best.c, best.uar);
    Ok(GridReport {
        mode,
        rows,
        best_c,
        best_uar,
        missing_classes: missing,
    })
}

/// Records test-set evaluations so each (task, normalization) is probed once.
#[derive(Debug, Default, Clone)]
pub struct ProbeLedger {
    probes: Vec<(String, NormMode)>,
}

impl ProbeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, task: &str, mode: NormMode) -> Result<()> {
        if self.probes.iter().any(|(t, m)| t == task && *m == mode) {
            return Err(Error::Protocol(format!("test set already probed for task `{task}` with {mode}")));
        }
        log::info!("test probe: task `{task}`, normalization {mode}");
        self.probes.push((task.to_string(), mode));
        Ok(())
    }

    pub fn probes(&self) -> &[(String, NormMode)] {
        &self.probes
    }
}

#[derive(Debug, Clone)]
pub struct TestReport {
    pub task: String,
    pub mode: NormMode,
    pub c: f64,
    pub accuracy: f64,
    pub uar: f64,
    pub confusion: ConfusionMatrix,
    /// Model refit on train and valid.
    pub model: KelmModel,
}

/// Refits normalization and model on train + valid with `c`, then scores the test set once.
#[allow(clippy::too_many_arguments)]
pub fn refit_and_test(
    train: &LabeledSet,
    valid: &LabeledSet,
    test: &LabeledSet,
    classes: &[String],
    c: f64,
    mode: NormMode,
    task: &str,
    ledger: &mut ProbeLedger,
) -> Result<TestReport> {
    ensure_disjoint(train, valid, "train and valid sets")?;
    ensure_disjoint(train, test, "train and test sets")?;
    ensure_disjoint(valid, test, "valid and test sets")?;
    if test.is_empty() {
        return Err(Error::Precondition("test set is empty".into()));
    }
    ledger.record(task, mode)?;
    let both = train.concat(valid)?;
    let norm = fit_norm(both.x.view(), mode.applies_l2())?;
    let z = norm.apply_rows(both.x.view())?;
    let k = gram(z.view(), z.view())?;
    let model = train_with_gram(z, &k, &both.y, classes, c, norm)?;
    let zt = model.norm.apply_rows(test.x.view())?;
    let (_, pred) = model.predict_rows(zt.view())?;
    let confusion = ConfusionMatrix::from_indices(&test.y, &pred, classes)?;
    Ok(TestReport {
        task: task.to_string(),
        mode,
        c,
        accuracy: accuracy(&confusion)?,
        uar: uar(&confusion)?,
        confusion,
        model,
    })
}
