//! Biorthogonal filter banks.
//!
//! Lowpass filters come from the Cohen–Daubechies–Feauveau factorization
//!
//! ```text
//! h(z) h̃(z) ∝ ((1 + z)/2)^(p + p̃) · P(y),   y = (2 − z − 1/z) / 4,
//! P(y) = Σ_{k<L} C(L − 1 + k, k) y^k,        L = (p + p̃) / 2,
//! ```
//!
//! where `p` and `p̃` are the vanishing moments of the synthesis and analysis
//! sides. The roots of `P` are split between the two filters: the spline
//! family gives every root to the analysis filter, the near-orthogonal
//! variants (`bior4.4`, `bior6.8`) hand a conjugation-closed subset to the
//! synthesis filter, chosen as the split whose filters are closest to unit
//! energy. Both lowpass filters are scaled to a DC gain of √2.
//!
//! Highpass filters are the modulated opposite lowpass filters,
//! `g̃[k] = (−1)^k h[k]` and `g[k] = (−1)^k h̃[k]`, with the highpass band
//! sampled at odd positions (see [`super::transform`]).

use num_complex::Complex64;

use crate::error::{Error, Result};

/// FIR filter with taps `taps[i]` at index `origin + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub taps: Vec<f64>,
    pub origin: isize,
}

impl Filter {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Coefficient at integer index `k` (zero outside the support).
    pub fn at(&self, k: isize) -> f64 {
        let i = k - self.origin;
        if i < 0 || i as usize >= self.taps.len() {
            0.0
        } else {
            self.taps[i as usize]
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        self.taps
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.origin + i as isize, c))
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    fn modulated(&self) -> Filter {
        Filter {
            taps: self
                .indices()
                .map(|(k, c)| if k.rem_euclid(2) == 0 { c } else { -c })
                .collect(),
            origin: self.origin,
        }
    }

    fn centered(taps: Vec<f64>) -> Filter {
        debug_assert!(taps.len() % 2 == 1);
        let origin = -((taps.len() / 2) as isize);
        Filter { taps, origin }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub name: String,
    pub analysis_lowpass: Filter,
    pub analysis_highpass: Filter,
    pub synthesis_lowpass: Filter,
    pub synthesis_highpass: Filter,
}

/// Names accepted by [`FilterBank::by_name`].
pub const FILTER_NAMES: &[&str] = &[
    "bior6.8", "bior4.4", "bior2.2", "bior2.4", "bior2.6", "bior2.8", "haar",
];

impl FilterBank {
    pub fn by_name(name: &str) -> Result<FilterBank> {
        match name {
            "haar" | "bior1.1" => Ok(FilterBank::haar()),
            "bior6.8" => FilterBank::cdf(name, 6, 8, 2),
            "bior4.4" => FilterBank::cdf(name, 4, 4, 1),
            "bior2.2" => FilterBank::cdf(name, 2, 2, 0),
            "bior2.4" => FilterBank::cdf(name, 2, 4, 0),
            "bior2.6" => FilterBank::cdf(name, 2, 6, 0),
            "bior2.8" => FilterBank::cdf(name, 2, 8, 0),
            _ => Err(Error::invalid_config(format!(
                "unknown filter bank {name:?}; expected one of {FILTER_NAMES:?}"
            ))),
        }
    }

    /// Default bank: 6 synthesis / 8 analysis vanishing moments (17/11 taps).
    pub fn bior68() -> FilterBank {
        FilterBank::cdf("bior6.8", 6, 8, 2).expect("bior6.8 construction")
    }

    pub fn haar() -> FilterBank {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let analysis_lowpass = Filter {
            taps: vec![s, s],
            origin: -1,
        };
        let synthesis_lowpass = Filter {
            taps: vec![s, s],
            origin: 0,
        };
        FilterBank {
            name: "haar".to_string(),
            analysis_highpass: synthesis_lowpass.modulated(),
            synthesis_highpass: analysis_lowpass.modulated(),
            analysis_lowpass,
            synthesis_lowpass,
        }
    }

    /// CDF construction with `synthesis_moments` = p, `analysis_moments` = p̃
    /// (both even) and `synthesis_roots` roots of P assigned to the synthesis
    /// filter.
    pub fn cdf(
        name: &str,
        synthesis_moments: usize,
        analysis_moments: usize,
        synthesis_roots: usize,
    ) -> Result<FilterBank> {
        let (p, pd) = (synthesis_moments, analysis_moments);
        if p == 0 || pd == 0 || p % 2 != 0 || pd % 2 != 0 {
            return Err(Error::invalid_config(
                "CDF construction needs even, positive vanishing moments",
            ));
        }
        let l = (p + pd) / 2;
        let coeffs: Vec<f64> = (0..l).map(|k| binomial(l - 1 + k, k)).collect();
        let roots = poly_roots(&coeffs);
        if synthesis_roots > roots.len() {
            return Err(Error::invalid_config(
                "more synthesis roots than the polynomial has",
            ));
        }

        let mut best: Option<(f64, Filter, Filter)> = None;
        for mask in 0u32..(1 << roots.len()) {
            if mask.count_ones() as usize != synthesis_roots
                || !closed_under_conjugation(&roots, mask)
            {
                continue;
            }
            let (syn, ana): (Vec<_>, Vec<_>) =
                (0..roots.len()).partition(|&i| mask & (1 << i) != 0);
            let h = lowpass(p, syn.iter().map(|&i| roots[i]));
            let hd = lowpass(pd, ana.iter().map(|&i| roots[i]));
            let energy = |f: &Filter| f.taps.iter().map(|c| c * c).sum::<f64>();
            let score = (energy(&h) - 1.0).abs() + (energy(&hd) - 1.0).abs();
            if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                best = Some((score, h, hd));
            }
        }
        let (_, synthesis_lowpass, analysis_lowpass) = best.ok_or_else(|| {
            Error::invalid_config("no conjugation-closed root split of that size")
        })?;
        Ok(FilterBank {
            name: name.to_string(),
            analysis_highpass: synthesis_lowpass.modulated(),
            synthesis_highpass: analysis_lowpass.modulated(),
            analysis_lowpass,
            synthesis_lowpass,
        })
    }

    pub fn max_len(&self) -> usize {
        [
            &self.analysis_lowpass,
            &self.analysis_highpass,
            &self.synthesis_lowpass,
            &self.synthesis_highpass,
        ]
        .iter()
        .map(|f| f.len())
        .max()
        .unwrap_or(0)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn closed_under_conjugation(roots: &[Complex64], mask: u32) -> bool {
    (0..roots.len()).filter(|&i| mask & (1 << i) != 0).all(|i| {
        let conj = roots[i].conj();
        (0..roots.len()).any(|j| mask & (1 << j) != 0 && (roots[j] - conj).norm() < 1e-9)
    })
}

/// `((1 + z)/2)^moments · Π (y − r)` with `y = (2 − z − 1/z)/4`, centered and
/// scaled to sum √2.
fn lowpass(moments: usize, roots: impl Iterator<Item = Complex64>) -> Filter {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for _ in 0..moments {
        c = convolve(&c, &[Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)]);
    }
    for r in roots {
        let f = [
            Complex64::new(-0.25, 0.0),
            Complex64::new(0.5, 0.0) - r,
            Complex64::new(-0.25, 0.0),
        ];
        c = convolve(&c, &f);
    }
    let taps: Vec<f64> = c.iter().map(|v| v.re).collect();
    let s: f64 = taps.iter().sum();
    Filter::centered(
        taps.iter()
            .map(|v| v * std::f64::consts::SQRT_2 / s)
            .collect(),
    )
}

fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of `Σ coeffs[k] x^k` by Durand–Kerner iteration followed by Newton
/// polishing.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[degree];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |x: Complex64| {
        monic
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    };
    let deriv = |x: Complex64| {
        (1..=degree).rev().fold(Complex64::new(0.0, 0.0), |acc, k| {
            acc * x + monic[k] * k as f64
        })
    };
    let bound = 1.0 + monic[..degree].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let seed = Complex64::from_polar(0.4 * bound, 0.9);
    let mut z: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..5 {
            let d = deriv(*r);
            if d.norm() == 0.0 {
                break;
            }
            *r -= eval(*r) / d;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    // PyWavelets `bior6.8` / `bior4.4` lowpass filters.
    const PYWT_BIOR68_DEC_LO: [f64; 17] = [
        0.0019088317364812906,
        -0.0019142861290887667,
        -0.016990639867602342,
        0.01193456527972926,
        0.04973290349094079,
        -0.07726317316720414,
        -0.09405920349573646,
        0.4207962846098268,
        0.8259229974584023,
        0.4207962846098268,
        -0.09405920349573646,
        -0.07726317316720414,
        0.04973290349094079,
        0.01193456527972926,
        -0.016990639867602342,
        -0.0019142861290887667,
        0.0019088317364812906,
    ];
    const PYWT_BIOR68_REC_LO: [f64; 11] = [
        0.014426282505624435,
        0.014467504896790148,
        -0.07872200106262882,
        -0.04036797903033992,
        0.41784910915027457,
        0.7589077294536541,
        0.41784910915027457,
        -0.04036797903033992,
        -0.07872200106262882,
        0.014467504896790148,
        0.014426282505624435,
    ];
    const PYWT_BIOR44_REC_LO: [f64; 7] = [
        -0.06453888262869706,
        -0.04068941760916406,
        0.41809227322161724,
        0.7884856164055829,
        0.41809227322161724,
        -0.04068941760916406,
        -0.06453888262869706,
    ];

    fn assert_taps(f: &Filter, want: &[f64]) {
        assert_eq!(f.len(), want.len());
        for (a, b) in f.taps.iter().zip(want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn bior68_matches_reference_coefficients() {
        let fb = FilterBank::bior68();
        assert_taps(&fb.analysis_lowpass, &PYWT_BIOR68_DEC_LO);
        assert_taps(&fb.synthesis_lowpass, &PYWT_BIOR68_REC_LO);
        assert_eq!(fb.analysis_lowpass.origin, -8);
        assert_eq!(fb.synthesis_lowpass.origin, -5);
    }

    #[test]
    fn bior44_is_the_9_7_pair() {
        let fb = FilterBank::by_name("bior4.4").unwrap();
        assert_eq!(fb.analysis_lowpass.len(), 9);
        assert_taps(&fb.synthesis_lowpass, &PYWT_BIOR44_REC_LO);
    }

    #[test]
    fn spline_bior22_is_5_3() {
        let fb = FilterBank::by_name("bior2.2").unwrap();
        let s = std::f64::consts::SQRT_2;
        assert_taps(&fb.synthesis_lowpass, &[s / 4.0, s / 2.0, s / 4.0]);
        assert_taps(
            &fb.analysis_lowpass,
            &[-s / 8.0, s / 4.0, 3.0 * s / 4.0, s / 4.0, -s / 8.0],
        );
    }

    #[test]
    fn lowpass_dc_gain_is_sqrt2_and_highpass_kills_dc() {
        for name in FILTER_NAMES {
            let fb = FilterBank::by_name(name).unwrap();
            assert!((fb.analysis_lowpass.sum() - std::f64::consts::SQRT_2).abs() < 1e-12);
            assert!((fb.synthesis_lowpass.sum() - std::f64::consts::SQRT_2).abs() < 1e-12);
            assert!(fb.analysis_highpass.sum().abs() < 1e-12, "{name}");
            assert!(fb.synthesis_highpass.sum().abs() < 1e-12, "{name}");
        }
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(
            FilterBank::by_name("db4"),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let mut r: Vec<f64> = poly_roots(&[6.0, -7.0, 0.0, 1.0])
            .iter()
            .map(|c| c.re)
            .collect();
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
