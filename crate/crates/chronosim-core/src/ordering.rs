//! Operator-ordering calculus for polynomials in position and momentum.
//!
//! Monomials `p^a x^b` are ambiguous as operators; this module maps an
//! ordering prescription to an exact normal form with every position power
//! standing left of every momentum power. Coefficients are computed in exact
//! Gaussian-rational arithmetic with the power of `hbar` tracked separately,
//! then lowered to floating point at the boundary.
//!
//! Two prescriptions are supported: full Weyl symmetrisation (the average of
//! all distinct letter arrangements) and the one-parameter family
//! `lambda p^a x^b + (1 - lambda) x^b p^a`. The two agree for `p^2 x` at
//! `lambda = 1/2` but differ for higher mixed powers.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_rational::Ratio;

use crate::{Error, Result};

/// Largest position/momentum power the public ordering API accepts.
pub const MAX_POWER: u32 = 4;

type Rat = Ratio<i128>;

/// Ordering prescription for mixed monomials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderingKind {
    /// Average over every distinct arrangement of the operator letters.
    Weyl,
    /// `lambda p^a x^b + (1 - lambda) x^b p^a`, `lambda` in `[0, 1]`.
    Lambda(f64),
}

/// A single `coeff * p^p_pow x^x_pow` term, to be read through an ordering
/// prescription.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedMonomial {
    pub coeff: f64,
    pub p_pow: u32,
    pub x_pow: u32,
}

/// Polynomial in `p` and `x` read through a single ordering prescription.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedPolynomial {
    pub ordering: OrderingKind,
    pub terms: Vec<OrderedMonomial>,
}

impl OrderedPolynomial {
    pub fn new(ordering: OrderingKind, terms: Vec<OrderedMonomial>) -> Self {
        OrderedPolynomial { ordering, terms }
    }

    /// Exact normal form of the whole polynomial.
    pub fn normal_form(&self) -> Result<NormalPolynomial> {
        let mut acc = NormalPolynomial::zero();
        for t in &self.terms {
            let nf = order_monomial(t.p_pow, t.x_pow, self.ordering)?;
            acc = acc.add(&nf.scale(Complex64::new(t.coeff, 0.0)));
        }
        Ok(acc)
    }
}

/// One normally ordered term `coeff * hbar^hbar_pow * x^x_pow p^p_pow`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalTerm {
    pub coeff: Complex64,
    pub x_pow: u32,
    pub p_pow: u32,
    pub hbar_pow: u32,
}

/// Normally ordered polynomial: positions left of momenta in every term,
/// terms sorted by `(x_pow, p_pow, hbar_pow)`, exact zeros dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormalPolynomial {
    terms: Vec<NormalTerm>,
}

impl NormalPolynomial {
    pub fn zero() -> Self {
        NormalPolynomial { terms: Vec::new() }
    }

    pub fn from_terms(terms: Vec<NormalTerm>) -> Self {
        let mut map: BTreeMap<(u32, u32, u32), Complex64> = BTreeMap::new();
        for t in terms {
            *map.entry((t.x_pow, t.p_pow, t.hbar_pow))
                .or_insert(Complex64::new(0.0, 0.0)) += t.coeff;
        }
        NormalPolynomial {
            terms: map
                .into_iter()
                .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
                .map(|((x, p, h), coeff)| NormalTerm {
                    coeff,
                    x_pow: x,
                    p_pow: p,
                    hbar_pow: h,
                })
                .collect(),
        }
    }

    pub fn constant(c: Complex64) -> Self {
        NormalPolynomial::from_terms(vec![NormalTerm {
            coeff: c,
            x_pow: 0,
            p_pow: 0,
            hbar_pow: 0,
        }])
    }

    pub fn terms(&self) -> &[NormalTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &NormalPolynomial) -> NormalPolynomial {
        let mut all = self.terms.clone();
        all.extend_from_slice(&other.terms);
        NormalPolynomial::from_terms(all)
    }

    pub fn scale(&self, c: Complex64) -> NormalPolynomial {
        NormalPolynomial::from_terms(
            self.terms
                .iter()
                .map(|t| NormalTerm { coeff: c * t.coeff, ..*t })
                .collect(),
        )
    }

    /// Operator product, re-normally-ordered with the exchange identity
    /// `p^b x^a = sum_k C(b,k) C(a,k) k! (-i hbar)^k x^(a-k) p^(b-k)`.
    pub fn mul(&self, other: &NormalPolynomial) -> NormalPolynomial {
        let mut out = Vec::new();
        for lt in &self.terms {
            for rt in &other.terms {
                // (x^a1 p^b1)(x^a2 p^b2): commute p^b1 past x^a2.
                let (b1, a2) = (lt.p_pow, rt.x_pow);
                for k in 0..=b1.min(a2) {
                    let combinatorial =
                        (binomial(b1 as i128, k as i128) * binomial(a2 as i128, k as i128) * factorial(k as i128))
                            as f64;
                    let phase = minus_i_pow(k);
                    out.push(NormalTerm {
                        coeff: lt.coeff * rt.coeff * combinatorial * phase,
                        x_pow: lt.x_pow + a2 - k,
                        p_pow: b1 - k + rt.p_pow,
                        hbar_pow: lt.hbar_pow + rt.hbar_pow + k,
                    });
                }
            }
        }
        NormalPolynomial::from_terms(out)
    }

    pub fn commutator(&self, other: &NormalPolynomial) -> NormalPolynomial {
        self.mul(other).add(&other.mul(self).scale(Complex64::new(-1.0, 0.0)))
    }

    /// Hermitian adjoint, re-normally-ordered.
    pub fn adjoint(&self) -> NormalPolynomial {
        let mut acc = NormalPolynomial::zero();
        for t in &self.terms {
            // (c x^a p^b)^† = conj(c) p^b x^a.
            let p_part = NormalPolynomial::from_terms(vec![NormalTerm {
                coeff: t.coeff.conj(),
                x_pow: 0,
                p_pow: t.p_pow,
                hbar_pow: t.hbar_pow,
            }]);
            let x_part = NormalPolynomial::from_terms(vec![NormalTerm {
                coeff: Complex64::new(1.0, 0.0),
                x_pow: t.x_pow,
                p_pow: 0,
                hbar_pow: 0,
            }]);
            acc = acc.add(&p_part.mul(&x_part));
        }
        acc
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let diff = self.adjoint().add(&self.scale(Complex64::new(-1.0, 0.0)));
        diff.terms.iter().all(|t| t.coeff.norm() <= tol)
    }

    /// Terms with `hbar` substituted, as `(x_pow, p_pow, coeff)` triples.
    pub fn with_hbar(&self, hbar: f64) -> Vec<(u32, u32, Complex64)> {
        let mut map: BTreeMap<(u32, u32), Complex64> = BTreeMap::new();
        for t in &self.terms {
            *map.entry((t.x_pow, t.p_pow)).or_insert(Complex64::new(0.0, 0.0)) +=
                t.coeff * hbar.powi(t.hbar_pow as i32);
        }
        map.into_iter().map(|((x, p), c)| (x, p, c)).collect()
    }
}

fn binomial(n: i128, k: i128) -> i128 {
    if k < 0 || k > n {
        return 0;
    }
    let mut acc = 1i128;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn factorial(n: i128) -> i128 {
    (1..=n).product::<i128>().max(1)
}

fn minus_i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

// ---------------------------------------------------------------------------
// Exact word algebra
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Letter {
    X,
    P,
}

/// Exact normal form: coefficient (re, im) as rationals per
/// `(x_pow, p_pow, hbar_pow)`.
type ExactNF = BTreeMap<(u32, u32, u32), (Rat, Rat)>;

fn nf_add(nf: &mut ExactNF, key: (u32, u32, u32), c: (Rat, Rat)) {
    let e = nf.entry(key).or_insert((Rat::from_integer(0), Rat::from_integer(0)));
    e.0 += c.0;
    e.1 += c.1;
}

/// Multiply the accumulated normal form by one letter on the right.
/// `x^a p^b * X = x^(a+1) p^b + b (-i hbar) x^a p^(b-1)`; appending `P` just
/// raises the momentum power.
fn append_letter(nf: &ExactNF, letter: Letter) -> ExactNF {
    let mut out = ExactNF::new();
    for (&(x, p, h), &(re, im)) in nf {
        match letter {
            Letter::P => nf_add(&mut out, (x, p + 1, h), (re, im)),
            Letter::X => {
                nf_add(&mut out, (x + 1, p, h), (re, im));
                if p > 0 {
                    let b = Rat::from_integer(p as i128);
                    // c * b * (-i): (re, im) -> (b im, -b re).
                    nf_add(&mut out, (x, p - 1, h + 1), (b * im, -b * re));
                }
            }
        }
    }
    out
}

fn fold_word(word: &[Letter]) -> ExactNF {
    let mut nf = ExactNF::new();
    nf.insert((0, 0, 0), (Rat::from_integer(1), Rat::from_integer(0)));
    for &l in word {
        nf = append_letter(&nf, l);
    }
    nf
}

/// All distinct arrangements of `n_p` P letters and `n_x` X letters.
pub(crate) fn distinct_words(n_p: u32, n_x: u32) -> Vec<Vec<Letter>> {
    let mut out = Vec::new();
    let mut word = Vec::with_capacity((n_p + n_x) as usize);
    fn rec(p_left: u32, x_left: u32, word: &mut Vec<Letter>, out: &mut Vec<Vec<Letter>>) {
        if p_left == 0 && x_left == 0 {
            out.push(word.clone());
            return;
        }
        if p_left > 0 {
            word.push(Letter::P);
            rec(p_left - 1, x_left, word, out);
            word.pop();
        }
        if x_left > 0 {
            word.push(Letter::X);
            rec(p_left, x_left - 1, word, out);
            word.pop();
        }
    }
    rec(n_p, n_x, &mut word, &mut out);
    out
}

fn exact_to_polynomial(nf: &ExactNF) -> NormalPolynomial {
    NormalPolynomial::from_terms(
        nf.iter()
            .map(|(&(x, p, h), &(re, im))| NormalTerm {
                coeff: Complex64::new(rat_to_f64(re), rat_to_f64(im)),
                x_pow: x,
                p_pow: p,
                hbar_pow: h,
            })
            .collect(),
    )
}

fn rat_to_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn scale_exact(nf: &ExactNF, s: Rat) -> ExactNF {
    nf.iter().map(|(&k, &(re, im))| (k, (re * s, im * s))).collect()
}

fn add_exact(a: &ExactNF, b: &ExactNF) -> ExactNF {
    let mut out = a.clone();
    for (&k, &c) in b {
        nf_add(&mut out, k, c);
    }
    out
}

/// Normal form of `p^p_pow x^x_pow` under the given prescription.
///
/// Powers are capped at [`MAX_POWER`]; Weyl symmetrisation enumerates at
/// most `C(8, 4) = 70` words. Pure powers are ordering-independent.
pub fn order_monomial(p_pow: u32, x_pow: u32, ordering: OrderingKind) -> Result<NormalPolynomial> {
    if p_pow > MAX_POWER || x_pow > MAX_POWER {
        return Err(Error::Unsupported(format!(
            "operator powers are capped at {MAX_POWER}, got p^{p_pow} x^{x_pow}"
        )));
    }
    match ordering {
        OrderingKind::Weyl => {
            let words = distinct_words(p_pow, x_pow);
            let weight = Rat::new(1, words.len() as i128);
            let mut acc = ExactNF::new();
            for w in &words {
                acc = add_exact(&acc, &fold_word(w));
            }
            Ok(exact_to_polynomial(&scale_exact(&acc, weight)))
        }
        OrderingKind::Lambda(lam) => {
            if !(0.0..=1.0).contains(&lam) {
                return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lam}")));
            }
            // p-first word: P^a X^b; x-first word: X^b P^a.
            let mut p_first = vec![Letter::P; p_pow as usize];
            p_first.extend(std::iter::repeat(Letter::X).take(x_pow as usize));
            let mut x_first = vec![Letter::X; x_pow as usize];
            x_first.extend(std::iter::repeat(Letter::P).take(p_pow as usize));
            let a = exact_to_polynomial(&fold_word(&p_first)).scale(Complex64::new(lam, 0.0));
            let b = exact_to_polynomial(&fold_word(&x_first)).scale(Complex64::new(1.0 - lam, 0.0));
            Ok(a.add(&b))
        }
    }
}
