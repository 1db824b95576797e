use super::{
    calibration_scores, conformal_threshold, fill_undefined, split_indices, CalibrationResult,
};
use crate::data::Dataset;
use crate::error::Result;
use crate::estimator::KernelSpec;
use crate::rule::{LocalAdjust, Partition, PredictionRule};
use crate::solver::{fit_prediction_rule, SolverConfig};

/// Calibrate separately within each partition cell.
///
/// A cell without calibration points gets threshold `+inf`. Every
/// calibration point must fall in some cell.
pub fn calibrate_local(
    rule: &PredictionRule,
    calib: &Dataset,
    partition: &Partition,
    alpha: f64,
) -> Result<(PredictionRule, Vec<CalibrationResult>)> {
    let scores = calibration_scores(rule, calib)?;
    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); partition.len()];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); partition.len()];
    for (j, (o, s)) in calib.iter().zip(&scores).enumerate() {
        let k = partition.cell_of(&o.x)?;
        per_cell[k].push(*s);
        members[k].push(j);
    }
    let mut results = Vec::with_capacity(partition.len());
    let mut thresholds = Vec::with_capacity(partition.len());
    for (scores, members) in per_cell.into_iter().zip(members) {
        let threshold = if scores.is_empty() {
            f64::INFINITY
        } else {
            conformal_threshold(&scores, alpha)?
        };
        thresholds.push(threshold);
        results.push(CalibrationResult {
            n2: scores.len(),
            scores,
            threshold,
            alpha,
            seed: None,
            train_indices: Vec::new(),
            calib_indices: members,
        });
    }
    let mut out = fill_undefined(rule);
    out.config.method = format!("{}-local-conformal", rule.config.method);
    out.config.alpha = Some(alpha);
    out.local = Some(LocalAdjust {
        partition: partition.clone(),
        thresholds,
    });
    Ok((out, results))
}

/// Split, fit on the training share, and calibrate per partition cell.
///
/// The `calib_indices` of each returned cell result index into `data`.
#[allow(clippy::too_many_arguments)]
pub fn local_split_conformal(
    data: &Dataset,
    grid: &[Vec<f64>],
    partition: &Partition,
    alpha: f64,
    split_frac: f64,
    spec: &KernelSpec,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(PredictionRule, Vec<CalibrationResult>)> {
    let (train_idx, calib_idx) = split_indices(data.len(), split_frac, seed)?;
    let train = data.subset(&train_idx)?;
    let calib = data.subset(&calib_idx)?;
    let fitted = fit_prediction_rule(&train, grid, spec, cfg)?;
    let (mut rule, mut results) = calibrate_local(&fitted, &calib, partition, alpha)?;
    rule.config.seed = Some(seed);
    for r in &mut results {
        r.seed = Some(seed);
        r.calib_indices = r.calib_indices.iter().map(|&j| calib_idx[j]).collect();
    }
    Ok((rule, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::calibrate;
    use crate::data::Observation;
    use crate::interval::IntervalUnion;
    use crate::rule::{linspace_grid, RuleConfig};

    fn base_rule() -> PredictionRule {
        PredictionRule::constant(
            linspace_grid(0.0, 1.0, 5),
            IntervalUnion::from_pairs(&[(0.0, 1.0)]).unwrap(),
            RuleConfig::default(),
        )
        .unwrap()
    }

    fn calib() -> Dataset {
        let obs = (0..40)
            .map(|i| {
                let x = i as f64 / 39.0;
                let y = if x < 0.5 { 0.5 } else { 1.0 + x };
                Observation::new(vec![x], y, y).unwrap()
            })
            .collect();
        Dataset::new(obs).unwrap()
    }

    #[test]
    fn one_cell_matches_global() {
        let r = base_rule();
        let part = Partition::equal_width(&[0.0], &[1.0], &[1]).unwrap();
        let (local, res) = calibrate_local(&r, &calib(), &part, 0.1).unwrap();
        let (global, g) = calibrate(&r, &calib(), 0.1).unwrap();
        assert_eq!(res[0].threshold, g.threshold);
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(local.set_at(&[x]).unwrap(), global.set_at(&[x]).unwrap());
        }
    }

    #[test]
    fn cells_get_their_own_threshold() {
        let r = base_rule();
        let part = Partition::equal_width(&[0.0], &[1.0], &[2]).unwrap();
        let (local, res) = calibrate_local(&r, &calib(), &part, 0.1).unwrap();
        assert!(res[0].threshold <= 0.0);
        assert!(res[1].threshold > 0.9);
        assert!(local.set_at(&[0.1]).unwrap().volume() <= 1.0);
        assert!(local.set_at(&[0.9]).unwrap().volume() > 2.8);
    }

    #[test]
    fn sparse_cell_falls_back_to_full_line() {
        let r = base_rule();
        let obs: Vec<Observation> = (0..3)
            .map(|i| Observation::new(vec![0.1 * i as f64], 0.5, 0.5).unwrap())
            .chain((0..30).map(|_| Observation::new(vec![0.9], 0.5, 0.5).unwrap()))
            .collect();
        let part = Partition::equal_width(&[0.0], &[1.0], &[2]).unwrap();
        let (rule, res) = calibrate_local(&r, &Dataset::new(obs).unwrap(), &part, 0.1).unwrap();
        assert_eq!(res[0].n2, 3);
        assert_eq!(res[0].threshold, f64::INFINITY);
        assert!(rule.set_at(&[0.2]).unwrap().is_full_line());
        assert!(!rule.set_at(&[0.8]).unwrap().is_full_line());
    }

    #[test]
    fn uncovered_point_is_error() {
        let r = base_rule();
        let part = Partition::equal_width(&[0.0], &[0.5], &[1]).unwrap();
        assert!(calibrate_local(&r, &calib(), &part, 0.1).is_err());
    }
}
