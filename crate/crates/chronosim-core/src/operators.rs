//! Dense matrix representations of position/momentum operators on a grid.
//!
//! Position is diagonal in the sampled basis; momentum is diagonal in the
//! unitary DFT basis `F[k, i] = exp(-i p_k x_i) / sqrt(n)`. Ordered
//! monomials get two independent realisations: the *defining* word form
//! (products of the bare `X` and `P` matrices, averaged per the
//! prescription) and the matrix of the exact normal form. They must agree
//! to rounding, which the tests pin; the evolution code uses the word form.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::GridSpec;
use crate::ordering::{order_monomial, NormalPolynomial, OrderedPolynomial, OrderingKind};
use crate::Result;

/// Unitary DFT matrix mapping position samples to momentum components.
pub fn dft_matrix(grid: &GridSpec) -> DMatrix<Complex64> {
    let n = grid.n();
    let xs = grid.xs();
    let scale = (n as f64).sqrt().recip();
    DMatrix::from_fn(n, n, |k, i| Complex64::from_polar(scale, -grid.p(k) * xs[i]))
}

/// Diagonal position operator.
pub fn position_matrix(grid: &GridSpec) -> DMatrix<Complex64> {
    let n = grid.n();
    let xs = grid.xs();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(xs[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Momentum operator `F^dagger diag(p) F`.
pub fn momentum_matrix(grid: &GridSpec) -> DMatrix<Complex64> {
    momentum_function_matrix(grid, |p| Complex64::new(p, 0.0))
}

/// Operator diagonal in the DFT momentum basis with entries `f(p_k)`.
pub fn momentum_function_matrix(
    grid: &GridSpec,
    f: impl Fn(f64) -> Complex64,
) -> DMatrix<Complex64> {
    let n = grid.n();
    let fm = dft_matrix(grid);
    let mut diag = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        diag[(k, k)] = f(grid.p(k));
    }
    fm.adjoint() * diag * fm
}

/// Matrix of an ordered monomial in its defining word form: Weyl averages
/// the letter products over every distinct arrangement, the one-parameter
/// form mixes the two extreme words.
pub fn word_average_matrix(
    p_pow: u32,
    x_pow: u32,
    ordering: OrderingKind,
    grid: &GridSpec,
) -> Result<DMatrix<Complex64>> {
    // Validate powers/lambda through the same gate as the calculus.
    order_monomial(p_pow, x_pow, ordering)?;
    let n = grid.n();
    let xm = position_matrix(grid);
    let pm = momentum_matrix(grid);
    let product = |word: &[crate::ordering::Letter]| -> DMatrix<Complex64> {
        let mut acc = DMatrix::<Complex64>::identity(n, n);
        for l in word {
            match l {
                crate::ordering::Letter::X => acc = acc * &xm,
                crate::ordering::Letter::P => acc = acc * &pm,
            }
        }
        acc
    };
    match ordering {
        OrderingKind::Weyl => {
            let words = crate::ordering::distinct_words(p_pow, x_pow);
            let mut acc = DMatrix::<Complex64>::zeros(n, n);
            for w in &words {
                acc += product(w);
            }
            Ok(acc.scale(1.0 / words.len() as f64))
        }
        OrderingKind::Lambda(lam) => {
            let mut p_first = vec![crate::ordering::Letter::P; p_pow as usize];
            p_first.extend(std::iter::repeat(crate::ordering::Letter::X).take(x_pow as usize));
            let mut x_first = vec![crate::ordering::Letter::X; x_pow as usize];
            x_first.extend(std::iter::repeat(crate::ordering::Letter::P).take(p_pow as usize));
            Ok(product(&p_first).scale(lam) + product(&x_first).scale(1.0 - lam))
        }
    }
}

/// Matrix of a normally ordered polynomial with `hbar = 1`: each term
/// contributes `c X^a P^b` built from spectral powers.
pub fn normal_poly_matrix(nf: &NormalPolynomial, grid: &GridSpec) -> DMatrix<Complex64> {
    let n = grid.n();
    let xs = grid.xs();
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    for (x_pow, p_pow, coeff) in nf.with_hbar(1.0) {
        let pb = momentum_function_matrix(grid, |p| Complex64::new(p.powi(p_pow as i32), 0.0));
        // Left-multiply by the diagonal x^a: scales row i by xs[i]^a.
        let mut term = pb;
        for i in 0..n {
            let xa = Complex64::new(xs[i].powi(x_pow as i32), 0.0) * coeff;
            for j in 0..n {
                term[(i, j)] *= xa;
            }
        }
        acc += term;
    }
    acc
}

/// Matrix of an ordered polynomial, each monomial in its defining word form.
pub fn ordered_poly_matrix(poly: &OrderedPolynomial, grid: &GridSpec) -> Result<DMatrix<Complex64>> {
    let n = grid.n();
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    for t in &poly.terms {
        acc += word_average_matrix(t.p_pow, t.x_pow, poly.ordering, grid)?.scale(t.coeff);
    }
    Ok(acc)
}

/// `Tr(M rho)` without forming the product.
pub fn trace_with(m: &DMatrix<Complex64>, rho: &DMatrix<Complex64>) -> Complex64 {
    let n = m.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += m[(i, j)] * rho[(j, i)];
        }
    }
    acc
}

/// Relative hermiticity defect `|M - M^dagger| / |M|` (Frobenius).
pub fn hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    (m - m.adjoint()).norm() / m.norm().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::states::{CMDensity, PureCMState, WavePacket};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn test_grid() -> GridSpec {
        GridSpec::new(64, -40.0, 40.0).unwrap()
    }

    #[test]
    fn dft_is_unitary() {
        let g = test_grid();
        let f = dft_matrix(&g);
        let defect = (f.adjoint() * &f - DMatrix::<Complex64>::identity(64, 64)).norm();
        assert!(defect < 1e-12, "unitarity defect {defect}");
    }

    #[test]
    fn grid_moments_match_closed_forms() {
        let g = GridSpec::new(256, -60.0, 60.0).unwrap();
        let pk = WavePacket::new(0.4, 0.25, 1.5, 0.0).unwrap();
        let st = PureCMState::single(pk);
        let rho = CMDensity::pure(st.clone()).to_grid(&g).unwrap();
        let (rm, _) = rho.grid_matrix().unwrap();

        let xm = position_matrix(&g);
        let pm = momentum_matrix(&g);
        assert_relative_eq!(trace_with(&xm, rm).re, 1.5, max_relative = 1e-10);
        assert_relative_eq!(trace_with(&pm, rm).re, 0.4, max_relative = 1e-10);

        let p2 = momentum_function_matrix(&g, |p| Complex64::new(p * p, 0.0));
        assert_relative_eq!(
            trace_with(&p2, rm).re,
            st.moment(0, 2).re,
            max_relative = 1e-10
        );
        let x2 = &xm * &xm;
        assert_relative_eq!(
            trace_with(&x2, rm).re,
            st.moment(2, 0).re,
            max_relative = 1e-10
        );
    }

    #[test]
    fn word_form_matches_exact_normal_form_on_states() {
        // As raw matrices the word products and the normal forms differ by
        // boundary terms: no finite grid satisfies the commutation relation
        // exactly (a commutator has zero trace). Acting on a state the grid
        // resolves, the two agree to rounding, and that is the regime the
        // evolution code uses. The band edge sits 18 momentum deviations out
        // so the truncated tails stay below rounding.
        let g = GridSpec::new(128, -40.0, 40.0).unwrap();
        let pk = WavePacket::new(0.4, 0.25, 1.0, 0.0).unwrap();
        let scale = g.dx().sqrt();
        let psi = nalgebra::DVector::from_iterator(
            g.n(),
            g.xs().iter().map(|&x| pk.amplitude_x(x) * scale),
        );
        for (p, x, ordering) in [
            (2, 1, OrderingKind::Weyl),
            (2, 2, OrderingKind::Weyl),
            (3, 2, OrderingKind::Weyl),
            (2, 1, OrderingKind::Lambda(1.0)),
            (2, 2, OrderingKind::Lambda(0.3)),
            (1, 1, OrderingKind::Lambda(0.0)),
        ] {
            let word = word_average_matrix(p, x, ordering, &g).unwrap();
            let nf = order_monomial(p, x, ordering).unwrap();
            let analytic = normal_poly_matrix(&nf, &g);
            let wv = &word * &psi;
            let av = &analytic * &psi;
            let diff = (&wv - &av).norm() / av.norm().max(1e-300);
            assert!(
                diff < 1e-10,
                "defining form and normal form disagree by {diff} on a resolved state \
                 for p^{p} x^{x} {ordering:?}"
            );
        }
    }

    #[test]
    fn word_and_normal_forms_differ_as_raw_matrices() {
        // The boundary defect itself: Frobenius disagreement is O(1) even
        // though the action on resolved states matches to 1e-10.
        let g = test_grid();
        let word = word_average_matrix(2, 1, OrderingKind::Weyl, &g).unwrap();
        let nf = order_monomial(2, 1, OrderingKind::Weyl).unwrap();
        let analytic = normal_poly_matrix(&nf, &g);
        let diff = (&word - &analytic).norm() / analytic.norm();
        assert!(diff > 1e-3, "expected a visible boundary defect, got {diff}");
    }

    #[test]
    fn weyl_word_matrices_are_hermitian() {
        let g = test_grid();
        for (p, x) in [(1, 1), (2, 1), (2, 2)] {
            let m = word_average_matrix(p, x, OrderingKind::Weyl, &g).unwrap();
            assert!(hermiticity_defect(&m) < 1e-13);
        }
        // The p-first extreme is visibly non-Hermitian.
        let skew = word_average_matrix(2, 1, OrderingKind::Lambda(1.0), &g).unwrap();
        assert!(hermiticity_defect(&skew) > 1e-6);
    }

    #[test]
    fn momentum_spectral_power_equals_repeated_product() {
        let g = test_grid();
        let pm = momentum_matrix(&g);
        let p2_product = &pm * &pm;
        let p2_spectral = momentum_function_matrix(&g, |p| Complex64::new(p * p, 0.0));
        assert!((&p2_product - &p2_spectral).norm() / p2_spectral.norm() < 1e-12);
    }

    #[test]
    fn ordered_polynomial_matrix_is_linear_in_terms() {
        let g = test_grid();
        let poly = OrderedPolynomial::new(
            OrderingKind::Weyl,
            vec![
                crate::ordering::OrderedMonomial { coeff: 2.0, p_pow: 2, x_pow: 0 },
                crate::ordering::OrderedMonomial { coeff: -0.5, p_pow: 2, x_pow: 1 },
            ],
        );
        let m = ordered_poly_matrix(&poly, &g).unwrap();
        let p2 = word_average_matrix(2, 0, OrderingKind::Weyl, &g).unwrap();
        let p2x = word_average_matrix(2, 1, OrderingKind::Weyl, &g).unwrap();
        let expected = p2.scale(2.0) + p2x.scale(-0.5);
        assert_abs_diff_eq!((m - expected).norm(), 0.0, epsilon = 1e-12);
    }
}
