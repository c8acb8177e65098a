//! Soft-margin RBF support vector machine trained with SMO.
//!
//! The dual is solved in its minimization form
//!
//! ```text
//! min  1/2 a'Qa - e'a    s.t.  y'a = 0,  0 <= a_i <= C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! with maximal-violating-pair working set selection using second order
//! information. Optimization stops once the violation `m(a) - M(a)` drops
//! below `kkt_tolerance`, which bounds every KKT residual `|y_i f(x_i) - 1|`
//! on free vectors (and the one-sided residuals on bounded ones) by the
//! same tolerance.

use std::collections::HashMap;
use std::sync::Arc;

use super::{sigmoid, LabeledSet, LearnerError};

const TAU: f64 = 1e-12;
const HARD_ITERATION_CAP: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: f64,
    pub kkt_tolerance: f64,
    /// Full sweeps (of `n` SMO steps each) without a new best violation
    /// before optimization is abandoned as non-convergent.
    pub max_passes: usize,
    pub cache_budget_bytes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 3.0,
            gamma: 0.002,
            kkt_tolerance: 1e-3,
            max_passes: 10,
            cache_budget_bytes: 64 << 20,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("C must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if self.kkt_tolerance.is_nan() || self.kkt_tolerance <= 0.0 {
            return bad("kkt_tolerance must be positive");
        }
        if self.max_passes == 0 {
            return bad("max_passes must be at least 1");
        }
        Ok(())
    }
}

pub fn rbf(a: &[f32], b: &[f32], gamma: f64) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub(crate) c: f64,
    pub(crate) gamma: f64,
    pub(crate) support_vectors: Vec<Vec<f32>>,
    /// `alpha_i * y_i` per support vector.
    pub(crate) coefficients: Vec<f64>,
    pub(crate) bias: f64,
    pub(crate) platt_a: f64,
    pub(crate) platt_b: f64,
}

impl SvmModel {
    pub fn decision_value(&self, x: &[f32]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, &coef)| coef * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn confidence(&self, x: &[f32]) -> f64 {
        platt_probability(self.decision_value(x), self.platt_a, self.platt_b)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn support_vectors(&self) -> &[Vec<f32>] {
        &self.support_vectors
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn platt(&self) -> (f64, f64) {
        (self.platt_a, self.platt_b)
    }
}

/// Solver diagnostics. `alphas` covers every training point, zeros included.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmReport {
    pub alphas: Vec<f64>,
    pub bias: f64,
    /// Dual objective in maximization form, `e'a - 1/2 a'Qa`.
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_violation: f64,
    /// False when the validation set was empty and Platt scaling was fitted
    /// on training decision values instead.
    pub platt_on_validation: bool,
}

/// LRU cache of kernel rows bounded by a byte budget. Rows are returned as
/// shared slices, so a budget too small for even one row still works.
struct KernelCache<'a> {
    set: &'a LabeledSet,
    gamma: f64,
    capacity: usize,
    rows: HashMap<usize, (Arc<[f64]>, u64)>,
    clock: u64,
}

impl<'a> KernelCache<'a> {
    fn new(set: &'a LabeledSet, gamma: f64, budget_bytes: usize) -> Self {
        let row_bytes = (set.len() * std::mem::size_of::<f64>()).max(1);
        Self {
            set,
            gamma,
            capacity: budget_bytes / row_bytes,
            rows: HashMap::new(),
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        self.clock += 1;
        if let Some((row, stamp)) = self.rows.get_mut(&i) {
            *stamp = self.clock;
            return Arc::clone(row);
        }
        let xi = self.set.row(i);
        let row: Arc<[f64]> = self
            .set
            .rows()
            .iter()
            .map(|xt| rbf(xi, xt, self.gamma))
            .collect();
        if self.capacity > 0 {
            if self.rows.len() >= self.capacity {
                let oldest = self
                    .rows
                    .iter()
                    .min_by_key(|(_, (_, stamp))| *stamp)
                    .map(|(&k, _)| k)
                    .expect("cache is non-empty");
                self.rows.remove(&oldest);
            }
            self.rows.insert(i, (Arc::clone(&row), self.clock));
        }
        row
    }
}

pub fn train(
    train: &LabeledSet,
    validation: &LabeledSet,
    cfg: &SvmConfig,
) -> Result<(SvmModel, SvmReport), LearnerError> {
    cfg.validate()?;
    train.require_both_classes()?;
    validation.require_dim(train.dim())?;

    let n = train.len();
    let y: Vec<f64> = train.labels().iter().map(|l| l.sign()).collect();
    let c = cfg.c;
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut cache = KernelCache::new(train, cfg.gamma, cfg.cache_budget_bytes);

    let up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut iterations = 0usize;
    let mut best_violation = f64::INFINITY;
    let mut improved_this_pass = false;
    let mut stale_passes = 0usize;
    let mut converged = false;
    let violation;

    loop {
        // i: maximal violator in I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if up(alpha[t], y[t]) && (i_sel.is_none() || -y[t] * grad[t] > gmax) {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            if low(alpha[t], y[t]) {
                gmin = gmin.min(-y[t] * grad[t]);
            }
        }
        let gap = gmax - gmin;
        if gap < best_violation {
            best_violation = gap;
            improved_this_pass = true;
        }
        if gap < cfg.kkt_tolerance || i_sel.is_none() {
            converged = true;
            violation = gap.max(0.0);
            break;
        }
        if iterations > 0 && iterations.is_multiple_of(n.max(1)) {
            if improved_this_pass {
                stale_passes = 0;
            } else {
                stale_passes += 1;
            }
            improved_this_pass = false;
        }
        if stale_passes >= cfg.max_passes || iterations >= HARD_ITERATION_CAP {
            violation = gap;
            break;
        }

        let i = i_sel.unwrap();
        let ki = cache.row(i);

        // j: second-order selection among I_low violators.
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let mut a = 2.0 - 2.0 * ki[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel else {
            converged = true;
            violation = gap;
            break;
        };
        let kj = cache.row(j);

        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let kij = ki[j];
        if y[i] != y[j] {
            let mut quad = 2.0 - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = 2.0 - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        alpha[i] = alpha[i].clamp(0.0, c);
        alpha[j] = alpha[j].clamp(0.0, c);

        let di = alpha[i] - old_ai;
        let dj = alpha[j] - old_aj;
        for t in 0..n {
            // Q_ti = y_t y_i K_ti
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
        iterations += 1;
    }

    let rho = offset(&alpha, &y, &grad, c);
    let bias = -rho;
    // e'a - 1/2 a'Qa with Qa = grad + e.
    let dual_objective: f64 = alpha
        .iter()
        .zip(&grad)
        .map(|(&a, &g)| a - 0.5 * a * (g + 1.0))
        .sum();

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(train.row(t).to_vec());
            coefficients.push(alpha[t] * y[t]);
        }
    }
    let mut model = SvmModel {
        c,
        gamma: cfg.gamma,
        support_vectors,
        coefficients,
        bias,
        platt_a: 0.0,
        platt_b: 0.0,
    };

    let calibration = if validation.is_empty() { train } else { validation };
    let decisions: Vec<f64> = calibration
        .rows()
        .iter()
        .map(|x| model.decision_value(x))
        .collect();
    let positives: Vec<bool> = calibration.labels().iter().map(|l| l.sign() > 0.0).collect();
    let (a, b) = fit_platt(&decisions, &positives);
    model.platt_a = a;
    model.platt_b = b;

    let report = SvmReport {
        alphas: alpha,
        bias,
        dual_objective,
        iterations,
        converged,
        final_violation: violation,
        platt_on_validation: !validation.is_empty(),
    };
    Ok((model, report))
}

/// Offset `rho` with `f(x) = sum a_i y_i K(x_i, x) - rho`: the mean of
/// `y_i G_i` over free vectors, or the midpoint of the feasible interval.
fn offset(alpha: &[f64], y: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

pub fn platt_probability(decision: f64, a: f64, b: f64) -> f64 {
    sigmoid(-(a * decision + b))
}

/// Fits `P(neutral | f) = 1 / (1 + exp(A f + B))` by Newton's method with
/// backtracking on the regularized targets of Platt (1999), following the
/// numerically safe formulation of Lin, Lin and Weng (2007).
pub fn fit_platt(decisions: &[f64], positive: &[bool]) -> (f64, f64) {
    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    const EPS: f64 = 1e-5;

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let fab = f * a + b;
                if fab >= 0.0 {
                    t * fab + (1.0 + (-fab).exp()).ln()
                } else {
                    (t - 1.0) * fab + (1.0 + fab.exp()).ln()
                }
            })
            .sum()
    };
    let mut fval = objective(a, b);

    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&f, &t) in decisions.iter().zip(&targets) {
            let fab = f * a + b;
            let (p, q) = if fab >= 0.0 {
                let e = (-fab).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = fab.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ComboScheme;
    use crate::dataset::BinaryLabel::{NonNeutral as Nn, Neutral as N};

    fn set(rows: Vec<Vec<f32>>, labels: Vec<crate::dataset::BinaryLabel>) -> LabeledSet {
        LabeledSet::new(ComboScheme::Hse1, rows, labels).unwrap()
    }

    fn empty() -> LabeledSet {
        LabeledSet::new(ComboScheme::Hse1, Vec::new(), Vec::new()).unwrap()
    }

    #[test]
    fn xor_is_separated() {
        let data = set(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![N, N, Nn, Nn],
        );
        let cfg = SvmConfig {
            gamma: 10.0,
            ..SvmConfig::default()
        };
        let (model, report) = train(&data, &empty(), &cfg).unwrap();
        assert!(report.converged);
        for (x, l) in data.rows().iter().zip(data.labels()) {
            assert_eq!(model.decision_value(x) > 0.0, *l == N);
        }
        assert!(report.alphas.iter().all(|&a| (0.0..=3.0).contains(&a)));
    }

    #[test]
    fn two_points_are_symmetric() {
        let data = set(vec![vec![0.0, 0.0], vec![1.0, 2.0]], vec![N, Nn]);
        let cfg = SvmConfig {
            gamma: 0.5,
            ..SvmConfig::default()
        };
        let (model, _) = train(&data, &empty(), &cfg).unwrap();
        let f0 = model.decision_value(data.row(0));
        let f1 = model.decision_value(data.row(1));
        assert!(f0 > 0.0 && f1 < 0.0);
        assert!((f0 + f1).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let data = set(vec![vec![0.0], vec![1.0]], vec![N, N]);
        assert_eq!(
            train(&data, &empty(), &SvmConfig::default()).unwrap_err(),
            LearnerError::SingleClass(N)
        );
    }

    #[test]
    fn cache_size_does_not_change_result() {
        let rows: Vec<Vec<f32>> = (0..30)
            .map(|i| vec![(i as f32 * 0.37).sin(), (i as f32 * 0.91).cos(), i as f32 / 30.0])
            .collect();
        let labels = (0..30).map(|i| if (i * 7) % 3 == 0 { N } else { Nn }).collect();
        let data = set(rows, labels);
        let base = SvmConfig {
            gamma: 1.0,
            ..SvmConfig::default()
        };
        let (m0, r0) = train(&data, &data, &SvmConfig { cache_budget_bytes: 0, ..base.clone() }).unwrap();
        let (m1, r1) = train(&data, &data, &SvmConfig { cache_budget_bytes: 3 * 30 * 8, ..base.clone() }).unwrap();
        let (m2, r2) = train(&data, &data, &base).unwrap();
        assert_eq!(m0, m1);
        assert_eq!(m1, m2);
        assert_eq!(r0, r1);
        assert_eq!(r1, r2);
    }

    #[test]
    fn platt_is_monotone_in_decision_value() {
        let decisions = [-2.0, -1.5, -0.2, 0.3, 1.0, 2.5, -0.5, 0.8];
        let pos = [false, false, false, true, true, true, true, false];
        let (a, b) = fit_platt(&decisions, &pos);
        assert!(a < 0.0, "positive decisions should raise confidence, A = {a}");
        assert!(platt_probability(2.0, a, b) > platt_probability(-2.0, a, b));
    }

    #[test]
    fn config_validation() {
        assert!(SvmConfig { c: 0.0, ..SvmConfig::default() }.validate().is_err());
        assert!(SvmConfig { gamma: -1.0, ..SvmConfig::default() }.validate().is_err());
        assert!(SvmConfig::default().validate().is_ok());
    }
}
