//! Peer objectives `f_i(x) = xᵀ A_i x + c_iᵀ x` and their sum.

use std::fmt::Write as _;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;

/// A smooth, strongly convex peer objective.
///
/// Only quadratics ship, but the simulator talks to components through
/// this interface.
pub trait Objective<T: Scalar> {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    /// Writes `∇f(x)` into `out`.
    fn gradient_into(&self, x: &[T], out: &mut [T]);
    /// Strong-convexity constant `ℓ_i`.
    fn strong_convexity(&self) -> T;
    /// Lipschitz constant `L_i` of the gradient.
    fn smoothness(&self) -> T;

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim()];
        self.gradient_into(x, &mut g);
        g
    }
}

/// Smallest eigenvalue below which a generated `A_i` is shifted.
pub const PD_FLOOR: f64 = 1e-8;
/// Shift added to near-singular generated `A_i`.
pub const PD_SHIFT: f64 = 1e-6;

/// `(ℓ_i, L_i) = (2 λ_min(A), 2 λ_max(A))`; `A` must be symmetric positive definite.
pub fn component_constants<T: Scalar>(a: &Matrix<T>) -> Result<(T, T)> {
    let eig = a.symmetric_eigenvalues()?;
    let lo = eig[0];
    let hi = *eig.last().expect("non-empty spectrum");
    if !(lo > T::zero()) {
        return Err(Error::NotPositiveDefinite(lo.to_f64_lossy()));
    }
    let two = T::lit(2.0);
    Ok((two * lo, two * hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticComponent<T> {
    a: Matrix<T>,
    c: Vec<T>,
    ell: T,
    lip: T,
}

impl<T: Scalar> QuadraticComponent<T> {
    pub fn new(a: Matrix<T>, c: Vec<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Input(format!(
                "A must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        check_dim(a.rows(), c.len())?;
        let (ell, lip) = component_constants(&a)?;
        Ok(Self { a, c, ell, lip })
    }

    /// One-dimensional component `a x² + c x`.
    pub fn scalar(a: T, c: T) -> Result<Self> {
        Self::new(Matrix::from_diag(&[a]), vec![c])
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    /// Value and gradient at `x`.
    pub fn calculus(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        check_dim(self.dim(), x.len())?;
        Ok((self.value(x), self.gradient(x)))
    }
}

impl<T: Scalar> Objective<T> for QuadraticComponent<T> {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &[T]) -> T {
        self.a.quad_form(x) + dot(&self.c, x)
    }

    fn gradient_into(&self, x: &[T], out: &mut [T]) {
        let two = T::lit(2.0);
        for (i, o) in out.iter_mut().enumerate() {
            *o = two * dot(self.a.row(i), x) + self.c[i];
        }
    }

    fn strong_convexity(&self) -> T {
        self.ell
    }

    fn smoothness(&self) -> T {
        self.lip
    }
}

/// The sum objective `f = Σ f_i` with aggregate constants and exact optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    components: Vec<QuadraticComponent<T>>,
    n: usize,
    /// `L = Σ L_j`
    lipschitz: T,
    /// `ℓ = min ℓ_j`
    ell: T,
    x_star: Vec<T>,
    f_star: T,
    /// `Σ A_j`, half the Hessian of `f`.
    a_sum: Matrix<T>,
}

impl<T: Scalar> Problem<T> {
    /// Aggregates components and solves `(2 Σ A_i) x = -Σ c_i` for the optimum.
    pub fn new(components: Vec<QuadraticComponent<T>>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Input("a problem needs at least one component".into()))?;
        let n = first.dim();
        let mut a_sum = Matrix::zeros(n, n);
        let mut c_sum = vec![T::zero(); n];
        let mut lipschitz = T::zero();
        let mut ell = T::infinity();
        for comp in &components {
            check_dim(n, comp.dim())?;
            a_sum.add_assign(comp.a());
            for (s, &c) in c_sum.iter_mut().zip(comp.c()) {
                *s = *s + c;
            }
            lipschitz = lipschitz + comp.smoothness();
            ell = ell.min(comp.strong_convexity());
        }
        let rhs: Vec<T> = c_sum.iter().map(|&c| -c).collect();
        let x_star = a_sum.scaled(T::lit(2.0)).cholesky_solve(&rhs)?;
        let f_star = components.iter().map(|c| c.value(&x_star)).sum();
        Ok(Self {
            components,
            n,
            lipschitz,
            ell,
            x_star,
            f_star,
            a_sum,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[QuadraticComponent<T>] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &QuadraticComponent<T> {
        &self.components[j]
    }

    /// `L = Σ_j L_j`
    pub fn smoothness(&self) -> T {
        self.lipschitz
    }

    /// `ℓ = min_j ℓ_j`
    pub fn strong_convexity(&self) -> T {
        self.ell
    }

    pub fn x_star(&self) -> &[T] {
        &self.x_star
    }

    pub fn f_star(&self) -> T {
        self.f_star
    }

    pub fn value(&self, x: &[T]) -> T {
        self.components.iter().map(|c| c.value(x)).sum()
    }

    /// `∇f(x) = Σ_j ∇f_j(x)`, summed in component order.
    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.n];
        let mut buf = vec![T::zero(); self.n];
        for comp in &self.components {
            comp.gradient_into(x, &mut buf);
            crate::linalg::add_into(&mut g, &buf);
        }
        g
    }

    /// `f(x) - f*`, evaluated as `(x - x*)ᵀ (Σ A_j) (x - x*)` to avoid cancellation.
    pub fn gap(&self, x: &[T]) -> T {
        let d = crate::linalg::sub(x, &self.x_star);
        self.a_sum.quad_form(&d).max(T::zero())
    }

    /// Line-oriented snapshot: `n N` header, then per component `n` rows of
    /// `A` followed by one row of `c`, all in 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n, self.nodes());
        for comp in &self.components {
            for i in 0..self.n {
                out.push_str(&join_fields(comp.a().row(i)));
                out.push('\n');
            }
            out.push_str(&join_fields(comp.c()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let dims = parse_fields::<usize>(ln, header)?;
        let [n, nodes] = dims[..] else {
            return Err(Error::Parse {
                line: ln,
                msg: "header must be `n N`".into(),
            });
        };
        let mut components = Vec::with_capacity(nodes);
        for _ in 0..nodes {
            let mut a = Vec::with_capacity(n * n);
            for _ in 0..n {
                let (ln, row) = lines.next().ok_or(Error::Parse {
                    line: ln,
                    msg: "truncated matrix".into(),
                })?;
                let vals = parse_fields::<f64>(ln, row)?;
                if vals.len() != n {
                    return Err(Error::Parse {
                        line: ln,
                        msg: format!("expected {} entries, got {}", n, vals.len()),
                    });
                }
                a.extend(vals.into_iter().map(T::lit));
            }
            let (ln, row) = lines.next().ok_or(Error::Parse {
                line: ln,
                msg: "truncated vector".into(),
            })?;
            let c: Vec<T> = parse_fields::<f64>(ln, row)?
                .into_iter()
                .map(T::lit)
                .collect();
            if c.len() != n {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {} entries, got {}", n, c.len()),
                });
            }
            components.push(QuadraticComponent::new(
                Matrix::from_row_major(n, n, a)?,
                c,
            )?);
        }
        Problem::new(components)
    }
}

/// 17 significant digits; round-trips every `f64`.
pub fn fmt_sci<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

fn join_fields<T: Scalar>(vals: &[T]) -> String {
    vals.iter()
        .map(|&v| fmt_sci(v))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_fields<F: std::str::FromStr>(line: usize, s: &str) -> Result<Vec<F>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<F>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad number `{tok}`"),
            })
        })
        .collect()
}

/// Square `B_i`: `random_instance_with_rows(n, n, nodes, seed)`.
pub fn random_instance<T: Scalar>(n: usize, nodes: usize, seed: u64) -> Result<Problem<T>> {
    random_instance_with_rows(n, n, nodes, seed)
}

/// Draws `B_i` (`rows × n`) and `c_i` with i.i.d. standard-normal entries
/// and sets `A_i = B_iᵀ B_i`, shifting by [`PD_SHIFT`] when `λ_min < PD_FLOOR`.
pub fn random_instance_with_rows<T: Scalar>(
    n: usize,
    rows: usize,
    nodes: usize,
    seed: u64,
) -> Result<Problem<T>> {
    random_instance_keyed(n, rows, nodes, Domain::Instance, &[seed])
}

pub(crate) fn random_instance_keyed<T: Scalar>(
    n: usize,
    rows: usize,
    nodes: usize,
    domain: Domain,
    key: &[u64],
) -> Result<Problem<T>> {
    if n == 0 || rows == 0 || nodes == 0 {
        return Err(Error::Input(format!(
            "instance sizes must be positive (n={n}, rows={rows}, N={nodes})"
        )));
    }
    let mut components = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let mut words = key.to_vec();
        words.push(i as u64);
        let mut r = rng::keyed(domain, &words);
        let b = Matrix::from_row_major(rows, n, rng::normal_vec::<T, _>(&mut r, rows * n))?;
        let c = rng::normal_vec::<T, _>(&mut r, n);
        let mut a = b.gram();
        let lo = a.symmetric_eigenvalues()?[0];
        if lo < T::lit(PD_FLOOR) {
            a.add_diag(T::lit(PD_SHIFT));
        }
        components.push(QuadraticComponent::new(a, c)?);
    }
    Problem::new(components)
}
