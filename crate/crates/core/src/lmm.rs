//! Random-intercept mixed-effects regression fit by profiled REML.
//!
//! The model is y = Xb + Zu + e with one random intercept per group,
//! u ~ N(0, s2_g I) and e ~ N(0, s2_e I). The REML likelihood is profiled
//! down to the scalar variance ratio lambda = s2_g / s2_e and maximized by
//! golden-section search on log(lambda); the fixed effects come back out of
//! generalized least squares at the optimum. With a single random intercept
//! everything reduces to per-group sums, so one objective evaluation is
//! O(n + g p^2) and never materializes an n-by-n covariance.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LOG_LAMBDA_LO: f64 = -12.0;
const LOG_LAMBDA_HI: f64 = 12.0;
const TOL: f64 = 1e-9;
const MAX_ITER: usize = 200;

/// Which regression a frame encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaKind {
    /// score ~ persona category, treatment-coded against "no-persona";
    /// grouped by (model, task).
    PersonaCategory,
    /// score ~ 0-indexed ordinal attribute level; grouped by (model, task).
    AttributeLevel,
    /// metric ~ model size category (1-4); grouped by (family, task).
    ModelScale,
    /// metric ~ prompting method, cell-means coding (no intercept);
    /// grouped by (model, task).
    StrategyEffect,
}

/// One row of the table regressions are built from. Only the fields a
/// formula needs have to be present.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Observation {
    /// Response: an accuracy score or a metric value.
    pub score: f64,
    pub model: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

/// Reference level for the persona-category regression.
pub const CATEGORY_REFERENCE: &str = "no-persona";

/// A response vector, named fixed-effect design, and one grouping factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFrame {
    pub response: Vec<f64>,
    /// Row-major design matrix, response.len() x column_names.len().
    pub design: Vec<f64>,
    pub column_names: Vec<String>,
    /// Group index per observation, dense in 0..group_names.len().
    pub groups: Vec<usize>,
    pub group_names: Vec<String>,
}

impl RegressionFrame {
    pub fn n_observations(&self) -> usize {
        self.response.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }
}

/// Parameter-count bin per the study's size categories: 2-3B models are
/// size 1, 7-9B size 2, the 27B model size 3, 70-72B size 4.
pub fn size_category(size_b: f64) -> u8 {
    if size_b < 5.0 {
        1
    } else if size_b < 15.0 {
        2
    } else if size_b < 50.0 {
        3
    } else {
        4
    }
}

/// Build the design for one of the four regression kinds.
pub fn build_frame(observations: &[Observation], kind: FormulaKind) -> Result<RegressionFrame> {
    if observations.is_empty() {
        return Err(Error::FrameError("no observations".into()));
    }
    let group_key = |o: &Observation| -> Result<String> {
        match kind {
            FormulaKind::ModelScale => {
                let family = o.family.as_deref().ok_or_else(|| {
                    Error::FrameError(format!("observation for model '{}' has no family", o.model))
                })?;
                Ok(format!("{family}/{}", o.task))
            }
            _ => Ok(format!("{}/{}", o.model, o.task)),
        }
    };

    let mut group_names: Vec<String> = observations
        .iter()
        .map(group_key)
        .collect::<Result<Vec<_>>>()?;
    {
        let mut unique = group_names.clone();
        unique.sort();
        unique.dedup();
        let index: std::collections::BTreeMap<&str, usize> = unique
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let groups: Vec<usize> = group_names.iter().map(|g| index[g.as_str()]).collect();
        group_names = unique;

        let response: Vec<f64> = observations.iter().map(|o| o.score).collect();
        let (design, column_names) = match kind {
            FormulaKind::PersonaCategory => {
                let mut categories: Vec<String> = observations
                    .iter()
                    .map(|o| {
                        o.category.clone().ok_or_else(|| {
                            Error::FrameError("observation is missing its category".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if !categories.iter().any(|c| c == CATEGORY_REFERENCE) {
                    return Err(Error::FrameError(format!(
                        "reference level '{CATEGORY_REFERENCE}' absent from categories"
                    )));
                }
                let mut levels: Vec<String> = categories.clone();
                levels.sort();
                levels.dedup();
                levels.retain(|c| c != CATEGORY_REFERENCE);
                let mut names = vec!["intercept".to_string()];
                names.extend(levels.iter().map(|c| format!("category[{c}]")));
                let mut design = Vec::with_capacity(observations.len() * names.len());
                for category in categories.drain(..) {
                    design.push(1.0);
                    for level in &levels {
                        design.push(if &category == level { 1.0 } else { 0.0 });
                    }
                }
                (design, names)
            }
            FormulaKind::AttributeLevel => {
                let mut design = Vec::with_capacity(observations.len() * 2);
                for o in observations {
                    let level = o.level.ok_or_else(|| {
                        Error::FrameError("observation is missing its attribute level".into())
                    })?;
                    design.push(1.0);
                    design.push(level);
                }
                (design, vec!["intercept".to_string(), "level".to_string()])
            }
            FormulaKind::ModelScale => {
                let mut design = Vec::with_capacity(observations.len() * 2);
                for o in observations {
                    let size = o.size_b.ok_or_else(|| {
                        Error::FrameError("observation is missing its model size".into())
                    })?;
                    design.push(1.0);
                    design.push(size_category(size) as f64);
                }
                (design, vec!["intercept".to_string(), "size".to_string()])
            }
            FormulaKind::StrategyEffect => {
                let methods: Vec<String> = observations
                    .iter()
                    .map(|o| {
                        o.method.clone().ok_or_else(|| {
                            Error::FrameError("observation is missing its method".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut levels = methods.clone();
                levels.sort();
                levels.dedup();
                let names: Vec<String> =
                    levels.iter().map(|m| format!("method[{m}]")).collect();
                let mut design = Vec::with_capacity(observations.len() * levels.len());
                for method in &methods {
                    for level in &levels {
                        design.push(if method == level { 1.0 } else { 0.0 });
                    }
                }
                (design, names)
            }
        };

        let frame = RegressionFrame {
            response,
            design,
            column_names,
            groups,
            group_names,
        };
        check_full_rank(&frame)?;
        Ok(frame)
    }
}

fn check_full_rank(frame: &RegressionFrame) -> Result<()> {
    let n = frame.n_observations();
    let p = frame.n_fixed();
    let x = DMatrix::from_row_slice(n, p, &frame.design);
    let rank = x.rank(1e-10);
    if rank < p {
        return Err(Error::FrameError(format!(
            "design has rank {rank} < {p} fixed-effect columns"
        )));
    }
    Ok(())
}

/// A fitted model: coefficients with Wald confidence intervals and the two
/// variance components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficient_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
    pub sigma2_group: f64,
    pub sigma2_residual: f64,
    pub log_reml: f64,
    pub converged: bool,
    /// The variance ratio hit an optimizer bound: the group variance is
    /// effectively zero (lower bound) or dominant (upper bound).
    pub boundary: bool,
    pub iterations: usize,
}

struct Sufficient {
    n: usize,
    p: usize,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    group_x: Vec<DVector<f64>>,
    group_y: Vec<f64>,
    group_n: Vec<usize>,
}

impl Sufficient {
    fn from_frame(frame: &RegressionFrame) -> Sufficient {
        let n = frame.n_observations();
        let p = frame.n_fixed();
        let g = frame.n_groups();
        let x = DMatrix::from_row_slice(n, p, &frame.design);
        let y = DVector::from_column_slice(&frame.response);
        let mut group_x = vec![DVector::zeros(p); g];
        let mut group_y = vec![0.0; g];
        let mut group_n = vec![0usize; g];
        for i in 0..n {
            let gi = frame.groups[i];
            group_x[gi] += x.row(i).transpose();
            group_y[gi] += y[i];
            group_n[gi] += 1;
        }
        Sufficient {
            n,
            p,
            xtx: x.transpose() * &x,
            xty: x.transpose() * &y,
            yty: y.dot(&y),
            group_x,
            group_y,
            group_n,
        }
    }

    /// GLS pieces at a given variance ratio. Returns
    /// (beta, chol(X'WX), rss, logdet V0, logdet X'WX).
    fn gls(&self, lambda: f64) -> Result<(DVector<f64>, Cholesky<f64, nalgebra::Dyn>, f64, f64, f64)> {
        let mut a = self.xtx.clone();
        let mut b = self.xty.clone();
        let mut q = self.yty;
        let mut logdet_v0 = 0.0;
        for g in 0..self.group_n.len() {
            let ng = self.group_n[g] as f64;
            let shrink = lambda / (1.0 + lambda * ng);
            a.syger(-shrink, &self.group_x[g], &self.group_x[g], 1.0);
            b.axpy(-shrink * self.group_y[g], &self.group_x[g], 1.0);
            q -= shrink * self.group_y[g] * self.group_y[g];
            logdet_v0 += (1.0 + lambda * ng).ln();
        }
        // syger only touches the lower triangle; mirror it.
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                a[(i, j)] = a[(j, i)];
            }
        }
        let chol = Cholesky::new(a)
            .ok_or_else(|| Error::NonConverged("X'WX is not positive definite".into()))?;
        let beta = chol.solve(&b);
        let rss = (q - beta.dot(&b)).max(0.0);
        let logdet_a = 2.0 * chol.l().diagonal().map(|d| d.ln()).sum();
        Ok((beta, chol, rss, logdet_v0, logdet_a))
    }

    /// Profiled REML log-likelihood at log(lambda), up to a constant.
    fn objective(&self, log_lambda: f64) -> Result<f64> {
        let lambda = log_lambda.exp();
        let (_, _, rss, logdet_v0, logdet_a) = self.gls(lambda)?;
        let df = (self.n - self.p) as f64;
        let sigma2 = (rss / df).max(f64::MIN_POSITIVE);
        Ok(-0.5 * (df * (sigma2.ln() + 1.0) + logdet_v0 + logdet_a))
    }
}

/// Fit the random-intercept model by maximizing the profiled REML
/// likelihood over log(lambda) in [-12, 12] to a 1e-9 bracket.
pub fn fit_reml(frame: &RegressionFrame) -> Result<FitResult> {
    let n = frame.n_observations();
    let p = frame.n_fixed();
    if frame.n_groups() < 2 {
        return Err(Error::PreconditionViolation(format!(
            "need at least 2 groups to identify the variance ratio, got {}",
            frame.n_groups()
        )));
    }
    if n <= p + 1 {
        return Err(Error::PreconditionViolation(format!(
            "need more than {} observations for {p} fixed effects, got {n}",
            p + 1
        )));
    }
    if frame.design.len() != n * p || frame.groups.len() != n {
        return Err(Error::ShapeError("frame dimensions are inconsistent".into()));
    }
    check_full_rank(frame)?;

    let stats = Sufficient::from_frame(frame);

    // Golden-section search; the profiled objective is unimodal in
    // log(lambda) for this model class.
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (LOG_LAMBDA_LO, LOG_LAMBDA_HI);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = stats.objective(c)?;
    let mut fd = stats.objective(d)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = stats.objective(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = stats.objective(d)?;
        }
        if hi - lo < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConverged(format!(
            "bracket still {} wide after {MAX_ITER} iterations",
            hi - lo
        )));
    }
    let log_lambda = 0.5 * (lo + hi);
    let mut boundary =
        log_lambda - LOG_LAMBDA_LO < 1e-3 || LOG_LAMBDA_HI - log_lambda < 1e-3;

    let mut fit = finalize(&stats, frame, log_lambda.exp())?;
    // A numerically zero residual leaves the variance ratio unidentifiable;
    // report it as the zero-group-variance boundary.
    let response_scale = (stats.yty / stats.n as f64).max(f64::MIN_POSITIVE);
    if fit.sigma2_residual <= 1e-12 * response_scale {
        boundary = true;
        fit.sigma2_group = 0.0;
    }
    fit.converged = true;
    fit.boundary = boundary;
    fit.iterations = iterations;
    fit.log_reml = stats.objective(log_lambda)?;
    Ok(fit)
}

/// GLS fit at a fixed variance ratio lambda = s2_g / s2_e. `fit_reml`
/// estimates lambda; this entry point pins it (lambda = 0 reproduces
/// ordinary least squares).
pub fn fit_with_variance_ratio(frame: &RegressionFrame, lambda: f64) -> Result<FitResult> {
    let stats = Sufficient::from_frame(frame);
    finalize(&stats, frame, lambda)
}

fn finalize(stats: &Sufficient, frame: &RegressionFrame, lambda: f64) -> Result<FitResult> {
    let (beta, chol, rss, _, _) = stats.gls(lambda)?;
    let df = (stats.n - stats.p) as f64;
    let sigma2_residual = rss / df;
    let sigma2_group = lambda * sigma2_residual;
    let covariance = chol.inverse() * sigma2_residual;
    let standard_errors: Vec<f64> = (0..stats.p)
        .map(|j| covariance[(j, j)].max(0.0).sqrt())
        .collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let ci95 = coefficients
        .iter()
        .zip(&standard_errors)
        .map(|(est, se)| (est - 1.96 * se, est + 1.96 * se))
        .collect();
    Ok(FitResult {
        coefficient_names: frame.column_names.clone(),
        coefficients,
        standard_errors,
        ci95,
        sigma2_group,
        sigma2_residual,
        log_reml: f64::NAN,
        converged: false,
        boundary: false,
        iterations: 0,
    })
}

/// One row of the coefficient table behind the error-bar plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub significant: bool,
}

/// Coefficients in design order with 95% intervals; significant when the
/// interval excludes zero.
pub fn coefficient_report(fit: &FitResult) -> Vec<CoefficientRow> {
    fit.coefficient_names
        .iter()
        .zip(&fit.coefficients)
        .zip(&fit.ci95)
        .map(|((name, est), (lo, hi))| CoefficientRow {
            name: name.clone(),
            estimate: *est,
            ci_lo: *lo,
            ci_hi: *hi,
            significant: *lo > 0.0 || *hi < 0.0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn intercept_frame(y: Vec<f64>, groups: Vec<usize>, n_groups: usize) -> RegressionFrame {
        let n = y.len();
        RegressionFrame {
            response: y,
            design: vec![1.0; n],
            column_names: vec!["intercept".into()],
            groups,
            group_names: (0..n_groups).map(|g| format!("g{g}")).collect(),
        }
    }

    /// Balanced one-way layout with planted variance components.
    fn balanced_frame(
        n_groups: usize,
        per_group: usize,
        mu: f64,
        sigma_g: f64,
        sigma_e: f64,
        seed: u64,
    ) -> RegressionFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::new();
        let mut groups = Vec::new();
        for g in 0..n_groups {
            let ug: f64 = rng.sample(StandardNormal);
            for _ in 0..per_group {
                let e: f64 = rng.sample(StandardNormal);
                y.push(mu + sigma_g * ug + sigma_e * e);
                groups.push(g);
            }
        }
        intercept_frame(y, groups, n_groups)
    }

    /// Closed-form balanced one-way REML: s2_e = MSW, s2_g = (MSB-MSW)/m.
    fn anova_reml(frame: &RegressionFrame, n_groups: usize, per_group: usize) -> (f64, f64, f64) {
        let n = frame.response.len() as f64;
        let grand = frame.response.iter().sum::<f64>() / n;
        let mut group_means = vec![0.0; n_groups];
        for (i, &g) in frame.groups.iter().enumerate() {
            group_means[g] += frame.response[i] / per_group as f64;
        }
        let ssw: f64 = frame
            .response
            .iter()
            .zip(&frame.groups)
            .map(|(y, &g)| (y - group_means[g]).powi(2))
            .sum();
        let ssb: f64 = group_means
            .iter()
            .map(|m| per_group as f64 * (m - grand).powi(2))
            .sum();
        let msw = ssw / (n - n_groups as f64);
        let msb = ssb / (n_groups as f64 - 1.0);
        let sigma2_g = ((msb - msw) / per_group as f64).max(0.0);
        (grand, msw, sigma2_g)
    }

    #[test]
    fn degenerate_constant_response_gives_zero_group_variance() {
        let frame = intercept_frame(vec![3.5; 40], (0..40).map(|i| i % 4).collect(), 4);
        let fit = fit_reml(&frame).unwrap();
        assert!(fit.boundary);
        assert!(fit.sigma2_group.abs() < 1e-9, "sigma2_group = {}", fit.sigma2_group);
        assert!((fit.coefficients[0] - 3.5).abs() < 1e-9);
    }

    #[test]
    fn single_group_is_a_precondition_violation() {
        let frame = intercept_frame(vec![1.0, 2.0, 3.0], vec![0, 0, 0], 1);
        assert!(matches!(fit_reml(&frame), Err(Error::PreconditionViolation(_))));
    }

    #[test]
    fn balanced_fit_matches_anova_closed_form() {
        let frame = balanced_frame(10, 20, 5.0, 0.8, 1.0, 99);
        let fit = fit_reml(&frame).unwrap();
        let (grand, msw, sigma2_g) = anova_reml(&frame, 10, 20);
        assert!((fit.coefficients[0] - grand).abs() < 1e-8);
        assert!((fit.sigma2_residual - msw).abs() < 1e-6, "{} vs {msw}", fit.sigma2_residual);
        assert!((fit.sigma2_group - sigma2_g).abs() < 1e-6, "{} vs {sigma2_g}", fit.sigma2_group);
    }

    #[test]
    fn zero_ratio_reproduces_ordinary_least_squares() {
        let frame = balanced_frame(5, 8, 1.0, 0.5, 1.0, 3);
        let fit = fit_with_variance_ratio(&frame, 0.0).unwrap();
        let ols_mean = frame.response.iter().sum::<f64>() / frame.response.len() as f64;
        assert!((fit.coefficients[0] - ols_mean).abs() < 1e-10);
        assert_eq!(fit.sigma2_group, 0.0);
    }

    #[test]
    fn fit_is_invariant_to_observation_order_and_group_labels() {
        let frame = balanced_frame(6, 10, 2.0, 0.7, 1.2, 17);
        let fit = fit_reml(&frame).unwrap();

        let n = frame.response.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        let relabel = |g: usize| (g + 3) % 6;
        let shuffled = RegressionFrame {
            response: perm.iter().map(|&i| frame.response[i]).collect(),
            design: vec![1.0; n],
            column_names: frame.column_names.clone(),
            groups: perm.iter().map(|&i| relabel(frame.groups[i])).collect(),
            group_names: frame.group_names.clone(),
        };
        let fit2 = fit_reml(&shuffled).unwrap();
        assert!((fit.coefficients[0] - fit2.coefficients[0]).abs() < 1e-9);
        assert!((fit.sigma2_group - fit2.sigma2_group).abs() < 1e-9);
        assert!((fit.sigma2_residual - fit2.sigma2_residual).abs() < 1e-9);
    }

    #[test]
    fn constant_shift_moves_only_the_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n_groups = 8;
        let per = 12;
        let mut y = Vec::new();
        let mut design = Vec::new();
        let mut groups = Vec::new();
        for g in 0..n_groups {
            let ug: f64 = rng.sample(StandardNormal);
            for i in 0..per {
                let level = (i % 3) as f64;
                let e: f64 = rng.sample(StandardNormal);
                y.push(1.0 + 0.5 * level + 0.6 * ug + 0.8 * e);
                design.extend([1.0, level]);
                groups.push(g);
            }
        }
        let frame = RegressionFrame {
            response: y.clone(),
            design: design.clone(),
            column_names: vec!["intercept".into(), "level".into()],
            groups: groups.clone(),
            group_names: (0..n_groups).map(|g| format!("g{g}")).collect(),
        };
        let fit = fit_reml(&frame).unwrap();

        let shifted = RegressionFrame {
            response: y.iter().map(|v| v + 4.0).collect(),
            design,
            column_names: frame.column_names.clone(),
            groups,
            group_names: frame.group_names.clone(),
        };
        let fit2 = fit_reml(&shifted).unwrap();
        assert!((fit2.coefficients[0] - fit.coefficients[0] - 4.0).abs() < 1e-9);
        assert!((fit2.coefficients[1] - fit.coefficients[1]).abs() < 1e-9);
    }

    #[test]
    fn optimizer_brackets_a_local_maximum() {
        let frame = balanced_frame(10, 20, 0.0, 1.0, 1.0, 5);
        let stats = Sufficient::from_frame(&frame);
        let fit = fit_reml(&frame).unwrap();
        let log_lambda = (fit.sigma2_group / fit.sigma2_residual).ln();
        let at = stats.objective(log_lambda).unwrap();
        assert!(at >= stats.objective(log_lambda - 0.05).unwrap());
        assert!(at >= stats.objective(log_lambda + 0.05).unwrap());
    }

    #[test]
    fn build_frame_persona_category_treatment_coding() {
        let mut observations = Vec::new();
        for (model, task) in [("m1", "t1"), ("m1", "t2")] {
            for category in ["no-persona", "exp", "name"] {
                observations.push(Observation {
                    score: 0.5,
                    model: model.into(),
                    task: task.into(),
                    category: Some(category.into()),
                    ..Default::default()
                });
            }
        }
        let frame = build_frame(&observations, FormulaKind::PersonaCategory).unwrap();
        assert_eq!(
            frame.column_names,
            vec!["intercept", "category[exp]", "category[name]"]
        );
        assert_eq!(frame.n_groups(), 2);
        // the reference rows carry only the intercept
        assert_eq!(&frame.design[0..3], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn build_frame_requires_reference_level() {
        let observations = vec![Observation {
            score: 0.5,
            model: "m".into(),
            task: "t".into(),
            category: Some("exp".into()),
            ..Default::default()
        }];
        assert!(matches!(
            build_frame(&observations, FormulaKind::PersonaCategory),
            Err(Error::FrameError(_))
        ));
    }

    #[test]
    fn build_frame_attribute_level_is_single_ordinal_column() {
        let observations: Vec<Observation> = (0..3)
            .map(|level| Observation {
                score: 0.5,
                model: "m".into(),
                task: format!("t{level}"),
                level: Some(level as f64),
                ..Default::default()
            })
            .collect();
        let frame = build_frame(&observations, FormulaKind::AttributeLevel).unwrap();
        assert_eq!(frame.column_names, vec!["intercept", "level"]);
        let levels: Vec<f64> = (0..3).map(|i| frame.design[i * 2 + 1]).collect();
        assert_eq!(levels, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn model_size_bins() {
        assert_eq!(size_category(2.0), 1);
        assert_eq!(size_category(3.0), 1);
        assert_eq!(size_category(7.0), 2);
        assert_eq!(size_category(9.0), 2);
        assert_eq!(size_category(27.0), 3);
        assert_eq!(size_category(70.0), 4);
        assert_eq!(size_category(72.0), 4);
    }

    #[test]
    fn strategy_frame_uses_cell_means_coding() {
        let mut observations = Vec::new();
        for method in ["base", "refine"] {
            for task in ["t1", "t2"] {
                observations.push(Observation {
                    score: 0.5,
                    model: "m".into(),
                    task: task.into(),
                    method: Some(method.into()),
                    ..Default::default()
                });
            }
        }
        let frame = build_frame(&observations, FormulaKind::StrategyEffect).unwrap();
        assert_eq!(frame.column_names, vec!["method[base]", "method[refine]"]);
        // every row has exactly one indicator set
        for row in 0..4 {
            let sum: f64 = frame.design[row * 2..row * 2 + 2].iter().sum();
            assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn coefficient_report_flags_intervals_excluding_zero() {
        let fit = FitResult {
            coefficient_names: vec!["a".into(), "b".into()],
            coefficients: vec![0.7, 0.0],
            standard_errors: vec![0.1, 0.5],
            ci95: vec![(0.7 - 1.96 * 0.1, 0.7 + 1.96 * 0.1), (-0.98, 0.98)],
            sigma2_group: 0.0,
            sigma2_residual: 1.0,
            log_reml: 0.0,
            converged: true,
            boundary: false,
            iterations: 1,
        };
        let report = coefficient_report(&fit);
        assert!((report[0].ci_lo - 0.504).abs() < 1e-9);
        assert!((report[0].ci_hi - 0.896).abs() < 1e-9);
        assert!(report[0].significant);
        assert!(!report[1].significant);
    }

    #[test]
    fn planted_ordinal_slope_is_recovered() {
        // 50 groups x 40 observations, slope 0.8 (percentage points) per level
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n_groups = 50;
        let per = 40;
        let mut y = Vec::new();
        let mut design = Vec::new();
        let mut groups = Vec::new();
        for g in 0..n_groups {
            let ug: f64 = rng.sample(StandardNormal);
            for _ in 0..per {
                let level = rng.gen_range(0..6) as f64;
                let e: f64 = rng.sample(StandardNormal);
                y.push(50.0 + 0.8 * level + 1.5 * ug + 2.0 * e);
                design.extend([1.0, level]);
                groups.push(g);
            }
        }
        let frame = RegressionFrame {
            response: y,
            design,
            column_names: vec!["intercept".into(), "level".into()],
            groups,
            group_names: (0..n_groups).map(|g| format!("g{g}")).collect(),
        };
        let fit = fit_reml(&frame).unwrap();
        assert!(
            (fit.coefficients[1] - 0.8).abs() < 0.15,
            "slope = {}",
            fit.coefficients[1]
        );
    }
}
