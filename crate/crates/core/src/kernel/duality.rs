//! The duality maps between potentials on `[0,1]` and on `Σ`, checked
//! modulo coboundaries through periodic-orbit averages.

use serde::Serialize;

use super::KernelContext;
use crate::error::{Error, Result};
use crate::par::*;
use crate::symbolic::{lyndon_words, EventuallyPeriodicPoint, Word};

/// Largest periodic average of a function on `Σ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualMax {
    pub m_star: f64,
    /// Primitive cycle of the best periodic point.
    #[serde(serialize_with = "crate::io::ser_display")]
    pub cycle: Word,
    /// Runner-up average, to judge uniqueness.
    pub second: f64,
}

/// Maximum over periodic points `γ^∞` (`|γ| ≤ max_period`) of the Birkhoff
/// average of `a_star`.
pub fn dual_max_average<F>(d: usize, max_period: usize, a_star: F) -> Result<DualMax>
where
    F: Fn(&EventuallyPeriodicPoint) -> Result<f64> + Sync,
{
    let words = lyndon_words(d, max_period);
    let mut avgs = words
        .par_iter()
        .map(|w| {
            let p = w.len();
            let mut sum = 0.0;
            for r in 0..p {
                sum += a_star(&EventuallyPeriodicPoint::periodic(&w.rotate(r))?)?;
            }
            Ok((w.clone(), sum / p as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    avgs.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.len().cmp(&b.0.len()))
            .then_with(|| a.0.cmp(&b.0))
    });
    let (cycle, m_star) = avgs
        .first()
        .cloned()
        .ok_or_else(|| Error::InvalidArgument("max_period must be at least 1".into()))?;
    Ok(DualMax {
        m_star,
        cycle,
        second: avgs.get(1).map_or(f64::NEG_INFINITY, |a| a.1),
    })
}

/// Result of the coboundary round trip `B = L*(L(A)) − A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrip {
    /// `max |Birkhoff average of B|` over the tested orbits.
    pub residual: f64,
    #[serde(serialize_with = "crate::io::ser_display")]
    pub worst_orbit: Word,
    pub orbits_tested: usize,
    pub depth: usize,
    pub max_period: usize,
}

impl KernelContext {
    /// `L*(ψ)(x) = ψ(ω̄) + Σ_{n=0}^{D} [ψ(ν_n…ν_0 ω̄) − ψ(ν_n…ν_1 ω̄)]` for the
    /// forward itinerary `ν_0, ν_1, …` of `x`.
    pub fn l_star<F>(&self, psi: F, itinerary: &[u8]) -> Result<f64>
    where
        F: Fn(&EventuallyPeriodicPoint) -> Result<f64>,
    {
        let d = self.map().degree();
        let bar = self.omega_bar();
        let mut total = psi(bar)?;
        for n in 0..itinerary.len() {
            let with: Vec<u8> = itinerary[..=n].iter().rev().copied().collect();
            let without: Vec<u8> = itinerary[1..=n].iter().rev().copied().collect();
            let a = bar.prepend_word(&Word::new(with, d)?)?;
            let b = bar.prepend_word(&Word::new(without, d)?)?;
            total += psi(&a)? - psi(&b)?;
        }
        Ok(total)
    }

    /// Round trip through the series dual: `B = L*(A*) − A`, averaged over
    /// every periodic orbit of period `≤ max_period`.
    pub fn dual_roundtrip_residual(&self, depth: usize, max_period: usize) -> Result<RoundTrip> {
        let bound = self.series_truncation_bound(depth);
        if bound > self.series_tol {
            return Err(Error::SeriesTruncation {
                bound,
                tol: self.series_tol,
            });
        }
        let pot = self.potential();
        let orbits = self
            .map()
            .enumerate_periodic_orbits(max_period, &|x| pot.a(x))?;
        let a_star = |w: &EventuallyPeriodicPoint| Ok(self.series_dual_at(w, 0.5, depth));
        let avgs = orbits
            .par_iter()
            .map(|o| {
                let fs = o.forward_symbols();
                let p = o.period();
                let mut sum = 0.0;
                for (j, &x) in o.points.iter().enumerate() {
                    let itin: Vec<u8> = (0..=depth).map(|n| fs[(j + n) % p]).collect();
                    sum += self.l_star(a_star, &itin)? - pot.a(x);
                }
                Ok((o.itinerary.clone(), (sum / p as f64).abs()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (worst_orbit, residual) = avgs
            .iter()
            .cloned()
            .fold((Word::empty(self.map().degree()), 0.0), |acc, (w, r)| {
                if r > acc.1 {
                    (w, r)
                } else {
                    acc
                }
            });
        Ok(RoundTrip {
            residual,
            worst_orbit,
            orbits_tested: avgs.len(),
            depth,
            max_period,
        })
    }
}
