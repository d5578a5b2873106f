//! Stability-constrained operator learning.
//!
//! `Â = (J − R) Q` with `J` skew-symmetric and `R = L_R L_Rᵀ + εI`,
//! `Q = L_Q L_Qᵀ + εI` symmetric positive definite. For any eigenpair
//! `Â v = λ v`, `Re λ · v*Qv = −(Qv)* R (Qv) < 0`, so `Â` is Hurwitz for
//! every parameter value. `Ĥ` is the symmetrized free block and only the
//! spectrum of `Â` is certified.
//!
//! The parameters are fitted to one-step RK4 predictions of the reduced
//! trajectory; gradients are obtained by reverse-mode differentiation of the
//! RK4 step written out by hand.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{solve_tikhonov, symmetrize_quadratic, QuadraticOperators, RegressionProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::snapshots::TimeGrid;

/// Relative loss improvement that resets the early-stopping counter.
const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct StableParameterization {
    /// Strict upper triangle of `J`, row by row.
    pub j_upper: Vec<f64>,
    /// Lower-triangular factor of `R − εI`.
    pub r_factor: DMatrix<f64>,
    /// Lower-triangular factor of `Q − εI`.
    pub q_factor: DMatrix<f64>,
    pub h_free: DMatrix<f64>,
    pub c: DVector<f64>,
    pub epsilon: f64,
}

fn lower_len(d: usize) -> usize {
    d * (d + 1) / 2
}

fn lower_entries(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| (0..=i).map(move |j| (i, j)))
}

fn upper_entries(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| ((i + 1)..d).map(move |j| (i, j)))
}

/// Factor `L` with `L Lᵀ = S − εI`, eigenvalues clipped at `ε` first.
fn shifted_factor(s: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let d = s.nrows();
    let sym = (s + s.transpose()) * 0.5 - DMatrix::identity(d, d) * epsilon;
    let eig = sym.symmetric_eigen();
    let floor = epsilon.max(1e-12);
    let clipped = DVector::from_iterator(d, eig.eigenvalues.iter().map(|v| v.max(floor)));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
    match rebuilt.clone().cholesky() {
        Some(c) => c.l(),
        None => DMatrix::identity(d, d) * floor.sqrt(),
    }
}

impl StableParameterization {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn param_count(d: usize) -> usize {
        d * (d - 1) / 2 + 2 * lower_len(d) + d * d * d + d
    }

    pub fn j(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::zeros(d, d);
        for ((r, c), v) in upper_entries(d).zip(&self.j_upper) {
            j[(r, c)] = *v;
            j[(c, r)] = -*v;
        }
        j
    }

    pub fn r(&self) -> DMatrix<f64> {
        spd(&self.r_factor, self.epsilon)
    }

    pub fn q(&self) -> DMatrix<f64> {
        spd(&self.q_factor, self.epsilon)
    }

    pub fn a(&self) -> DMatrix<f64> {
        (self.j() - self.r()) * self.q()
    }

    pub fn realize(&self) -> Result<QuadraticOperators> {
        QuadraticOperators::new(self.a(), self.h_free.clone(), self.c.clone())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let d = self.dim();
        let mut v = Vec::with_capacity(Self::param_count(d));
        v.extend_from_slice(&self.j_upper);
        v.extend(lower_entries(d).map(|(i, j)| self.r_factor[(i, j)]));
        v.extend(lower_entries(d).map(|(i, j)| self.q_factor[(i, j)]));
        v.extend_from_slice(self.h_free.as_slice());
        v.extend_from_slice(self.c.as_slice());
        v
    }

    pub fn from_vec(d: usize, epsilon: f64, v: &[f64]) -> Result<Self> {
        if v.len() != Self::param_count(d) {
            return Err(Error::dim(format!(
                "parameter vector has {} entries, expected {}",
                v.len(),
                Self::param_count(d)
            )));
        }
        let nu = d * (d - 1) / 2;
        let nl = lower_len(d);
        let mut r_factor = DMatrix::zeros(d, d);
        let mut q_factor = DMatrix::zeros(d, d);
        for (k, (i, j)) in lower_entries(d).enumerate() {
            r_factor[(i, j)] = v[nu + k];
            q_factor[(i, j)] = v[nu + nl + k];
        }
        let h_start = nu + 2 * nl;
        Ok(StableParameterization {
            j_upper: v[..nu].to_vec(),
            r_factor,
            q_factor,
            h_free: DMatrix::from_column_slice(d, d * d, &v[h_start..h_start + d * d * d]),
            c: DVector::from_column_slice(&v[h_start + d * d * d..]),
            epsilon,
        })
    }

    /// Parameters whose realized `Â` approximates `ops.a()`.
    ///
    /// `Â` is first shifted left until it is Hurwitz with a small margin.
    /// With `P` solving `Âᵀ P + P Â = −I`, `Q = P` and `Â Q⁻¹ = J − R`
    /// splits into its skew and (negative definite) symmetric parts.
    pub fn from_operators(ops: &QuadraticOperators, epsilon: f64) -> Self {
        let d = ops.dim();
        let mut a = ops.a().clone();
        let margin = 1e-3 * a.norm().max(1.0);
        let mu = linalg::max_real_eigenvalue(&a).unwrap_or(0.0);
        if !(mu < -margin) {
            let shift = if mu.is_finite() { mu + margin } else { margin };
            for i in 0..d {
                a[(i, i)] -= shift;
            }
        }
        let eye = DMatrix::<f64>::identity(d, d);
        let split = linalg::solve_lyapunov(&a, &eye).ok().and_then(|p| {
            let p_inv = p.clone().cholesky()?.inverse();
            // balance ‖M‖ and ‖Q‖, A = M Q is invariant under (cM, Q/c)
            let m = &a * &p_inv;
            let c = (p.norm() / m.norm().max(f64::MIN_POSITIVE)).sqrt();
            Some((m * c, p / c))
        });
        let (m, q) = split.unwrap_or_else(|| {
            // symmetric-part shift with Q = I
            let s = (&a + a.transpose()) * 0.5;
            let top = s.symmetric_eigen().eigenvalues.max();
            let mut m = a.clone();
            if top > -margin {
                for i in 0..d {
                    m[(i, i)] -= top + margin;
                }
            }
            (m, eye.clone())
        });
        let r = -(&m + m.transpose()) * 0.5;
        let j = (&m - m.transpose()) * 0.5;
        StableParameterization {
            j_upper: upper_entries(d).map(|(i, k)| j[(i, k)]).collect(),
            r_factor: shifted_factor(&r, epsilon),
            q_factor: shifted_factor(&q, epsilon),
            h_free: ops.h().clone(),
            c: ops.c().clone(),
            epsilon,
        }
    }

    /// Random parameters of moderate size, for initialization and testing.
    pub fn random(d: usize, epsilon: f64, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = || rng.random_range(-scale..scale);
        let mut r_factor = DMatrix::zeros(d, d);
        let mut q_factor = DMatrix::zeros(d, d);
        for (i, j) in lower_entries(d) {
            r_factor[(i, j)] = draw();
            q_factor[(i, j)] = draw();
        }
        for i in 0..d {
            r_factor[(i, i)] = r_factor[(i, i)].abs() + 0.5;
            q_factor[(i, i)] = q_factor[(i, i)].abs() + 0.5;
        }
        StableParameterization {
            j_upper: (0..d * (d - 1) / 2).map(|_| draw()).collect(),
            r_factor,
            q_factor,
            h_free: DMatrix::from_fn(d, d * d, |_, _| draw() * 0.1),
            c: DVector::from_fn(d, |_, _| draw() * 0.1),
            epsilon,
        }
    }
}

fn spd(factor: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let d = factor.nrows();
    factor * factor.transpose() + DMatrix::identity(d, d) * epsilon
}

/// One RK4 step with stage inputs retained for the reverse sweep.
struct Rk4Step {
    stages: [DVector<f64>; 4],
    next: DVector<f64>,
}

fn rk4_step(ops: &QuadraticOperators, x: &DVector<f64>, h: f64) -> Rk4Step {
    let d = x.len();
    let mut k1 = DVector::zeros(d);
    let mut k2 = DVector::zeros(d);
    let mut k3 = DVector::zeros(d);
    let mut k4 = DVector::zeros(d);
    let z1 = x.clone();
    ops.rhs_into(&z1, &mut k1);
    let z2 = x + &k1 * (0.5 * h);
    ops.rhs_into(&z2, &mut k2);
    let z3 = x + &k2 * (0.5 * h);
    ops.rhs_into(&z3, &mut k3);
    let z4 = x + &k3 * h;
    ops.rhs_into(&z4, &mut k4);
    let next = x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
    Rk4Step {
        stages: [z1, z2, z3, z4],
        next,
    }
}

fn check_inputs(states: &DMatrix<f64>, grid: &TimeGrid, d: usize) -> Result<()> {
    if states.nrows() != d {
        return Err(Error::dim(format!(
            "states have {} rows, parameters are {d}-dimensional",
            states.nrows()
        )));
    }
    if states.ncols() != grid.len() {
        return Err(Error::dim("grid length differs from the snapshot count"));
    }
    Ok(())
}

/// Mean squared one-step RK4 prediction error plus `α_H ‖Ĥ‖²_F`.
pub fn rollout_loss(
    theta: &StableParameterization,
    states: &DMatrix<f64>,
    grid: &TimeGrid,
    alpha_h: f64,
) -> Result<f64> {
    check_inputs(states, grid, theta.dim())?;
    let ops = theta.realize_unchecked();
    let t = grid.as_slice();
    let steps = states.ncols() - 1;
    let mut total = 0.0;
    for i in 0..steps {
        let x = states.column(i).into_owned();
        let step = rk4_step(&ops, &x, t[i + 1] - t[i]);
        total += (step.next - states.column(i + 1)).norm_squared();
    }
    Ok(total / steps as f64 + alpha_h * ops.h().norm_squared())
}

/// Loss and its gradient with respect to [`StableParameterization::to_vec`].
pub fn rollout_loss_and_gradient(
    theta: &StableParameterization,
    states: &DMatrix<f64>,
    grid: &TimeGrid,
    alpha_h: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = theta.dim();
    check_inputs(states, grid, d)?;
    let ops = theta.realize_unchecked();
    let t = grid.as_slice();
    let steps = states.ncols() - 1;
    let inv_steps = 1.0 / steps as f64;

    let mut g_a = DMatrix::<f64>::zeros(d, d);
    let mut g_h = DMatrix::<f64>::zeros(d, d * d);
    let mut g_c = DVector::<f64>::zeros(d);
    let mut total = 0.0;

    for i in 0..steps {
        let h = t[i + 1] - t[i];
        let x = states.column(i).into_owned();
        let step = rk4_step(&ops, &x, h);
        let resid = &step.next - states.column(i + 1);
        total += resid.norm_squared();

        let y_bar = resid * (2.0 * inv_steps);
        let mut k_bar = [
            &y_bar * (h / 6.0),
            &y_bar * (h / 3.0),
            &y_bar * (h / 3.0),
            &y_bar * (h / 6.0),
        ];
        // stage s feeds z_{s+1} = x + c_s h k_s with c = (1/2, 1/2, 1)
        let feed = [0.5 * h, 0.5 * h, h];
        for s in (0..4).rev() {
            let z = &step.stages[s];
            let kb = k_bar[s].clone();
            g_a.ger(1.0, &kb, z, 1.0);
            g_h.ger(1.0, &kb, &linalg::kron_vec(z, z), 1.0);
            g_c += &kb;
            if s > 0 {
                let z_bar = ops.jacobian(z).tr_mul(&kb);
                k_bar[s - 1] += z_bar * feed[s - 1];
            }
        }
    }

    let loss = total * inv_steps + alpha_h * ops.h().norm_squared();
    g_h += ops.h() * (2.0 * alpha_h);
    let g_h_free = symmetrize_quadratic(&g_h);

    // A = (J − R) Q
    let q = theta.q();
    let m = theta.j() - theta.r();
    let g_m = &g_a * q.transpose();
    let g_q = m.transpose() * &g_a;
    let g_r = -&g_m;

    let mut grad = Vec::with_capacity(StableParameterization::param_count(d));
    grad.extend(upper_entries(d).map(|(i, j)| g_m[(i, j)] - g_m[(j, i)]));
    let g_lr = (&g_r + g_r.transpose()) * &theta.r_factor;
    let g_lq = (&g_q + g_q.transpose()) * &theta.q_factor;
    grad.extend(lower_entries(d).map(|(i, j)| g_lr[(i, j)]));
    grad.extend(lower_entries(d).map(|(i, j)| g_lq[(i, j)]));
    grad.extend_from_slice(g_h_free.as_slice());
    grad.extend_from_slice(g_c.as_slice());
    Ok((loss, grad))
}

impl StableParameterization {
    fn realize_unchecked(&self) -> QuadraticOperators {
        QuadraticOperators::new_unchecked(self.a(), self.h_free.clone(), self.c.clone())
    }
}

/// Result of [`solve_stable`].
#[derive(Debug, Clone)]
pub struct StableFit {
    pub ops: QuadraticOperators,
    pub params: StableParameterization,
    pub initial_loss: f64,
    pub loss: f64,
    pub epochs: usize,
    pub max_real_eig: f64,
    /// Set when optimization stopped on a non-finite loss.
    pub diagnostic: Option<String>,
}

fn triangular2(epoch: usize, half: usize, lo: f64, hi: f64) -> f64 {
    let cycle = epoch / (2 * half);
    let x = (epoch as f64 / half as f64 - 2.0 * cycle as f64 - 1.0).abs();
    lo + (hi - lo) * (1.0 - x).max(0.0) / 2f64.powi(cycle as i32)
}

/// Fit a [`StableParameterization`] by Adam on the rollout loss with a
/// triangular learning-rate cycle whose amplitude halves every cycle.
///
/// Without `init`, optimization starts from the Tikhonov solution of the
/// same problem mapped onto the parameterization. The best iterate seen is
/// returned.
pub fn solve_stable(
    p: &RegressionProblem,
    cfg: &SolverConfig,
    init: Option<&QuadraticOperators>,
) -> Result<StableFit> {
    cfg.validate()?;
    let grid = p
        .grid()
        .ok_or_else(|| Error::invalid("stable-gradient backend needs the time grid"))?;
    let states = p.states();
    let d = p.dim();
    let g = &cfg.gradient;
    let alpha_h = cfg.alpha.h;

    let start = match init {
        Some(ops) => StableParameterization::from_operators(ops, g.epsilon),
        None => match solve_tikhonov(p, cfg) {
            Ok(fit) => StableParameterization::from_operators(&fit.ops, g.epsilon),
            Err(_) => {
                let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                StableParameterization::random(d, g.epsilon, 0.1, &mut rng)
            }
        },
    };

    let mut theta = start.to_vec();
    let initial_loss = rollout_loss(&start, &states, grid, alpha_h)?;
    if !initial_loss.is_finite() {
        return Err(Error::Numerical("rollout loss is not finite at the initial point".into()));
    }

    let (beta1, beta2, eps_adam): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m1 = vec![0.0; theta.len()];
    let mut m2 = vec![0.0; theta.len()];
    let mut best = theta.clone();
    let mut best_loss = initial_loss;
    let mut stale = 0usize;
    let mut epochs = 0usize;
    let mut diagnostic = None;

    for epoch in 0..g.max_epochs {
        let current = StableParameterization::from_vec(d, g.epsilon, &theta)?;
        let (loss, grad) = rollout_loss_and_gradient(&current, &states, grid, alpha_h)?;
        epochs = epoch + 1;
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            diagnostic = Some(format!(
                "non-finite rollout loss at epoch {epoch}; returning the best finite iterate (loss {best_loss:.6e})"
            ));
            break;
        }
        if loss < best_loss * (1.0 - MIN_IMPROVEMENT) {
            stale = 0;
        } else {
            stale += 1;
        }
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&theta);
        }
        if stale >= g.patience || best_loss == 0.0 {
            break;
        }

        let lr = triangular2(epoch, g.half_cycle, g.lr_min, g.lr_max);
        let t = (epoch + 1) as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for k in 0..theta.len() {
            m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
            m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
            theta[k] -= lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps_adam);
        }
    }

    let params = StableParameterization::from_vec(d, g.epsilon, &best)?;
    let ops = params.realize()?;
    let max_real_eig = ops.max_real_eigenvalue()?;
    Ok(StableFit {
        ops,
        params,
        initial_loss,
        loss: best_loss,
        epochs,
        max_real_eig,
        diagnostic,
    })
}
