//! Resource-centric price updates run by the regulator.

use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};

/// Per-resource prices, entrywise non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn zeros(resources: usize) -> Self {
        Self(vec![0.0; resources])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Contract(format!(
                "prices must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl PricingConfig {
    /// Accepts `alpha ∈ [0, 1]`; `alpha = 0` is allowed for pure
    /// telescoping runs even though the analysis assumes `alpha > 0`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let config = Self { alpha, beta };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha)) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Whether `alpha` lies in the half-open range `(0, 1]` the analysis needs.
    pub fn analysis_range_ok(&self) -> bool {
        self.alpha > 0.0 && self.alpha <= 1.0
    }
}

/// `Λ_r ← [(1−α)Λ_r + β(φ_r − L_r)]₊` for every resource.
pub fn price_update(
    prices: &PriceVector,
    loads: &[f64],
    capacities: &[f64],
    config: &PricingConfig,
) -> Result<PriceVector> {
    config.validate()?;
    if loads.len() != prices.len() || capacities.len() != prices.len() {
        return Err(structural(format!(
            "price update with {} prices, {} loads, {} capacities",
            prices.len(),
            loads.len(),
            capacities.len()
        )));
    }
    let next = prices
        .0
        .iter()
        .zip(loads.iter().zip(capacities))
        .map(|(&lambda, (&phi, &cap))| {
            ((1.0 - config.alpha) * lambda + config.beta * (phi - cap)).max(0.0)
        })
        .collect();
    Ok(PriceVector(next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(lambda: f64, alpha: f64, beta: f64, phi: f64, cap: f64) -> f64 {
        let cfg = PricingConfig::new(alpha, beta).unwrap();
        price_update(&PriceVector::new(vec![lambda]).unwrap(), &[phi], &[cap], &cfg)
            .unwrap()
            .as_slice()[0]
    }

    #[test]
    fn update_examples() {
        assert!((one(1.0, 0.1, 0.5, 16.0, 14.0) - 1.9).abs() < 1e-12);
        assert_eq!(one(0.2, 0.5, 0.1, 10.0, 14.0), 0.0);
        assert_eq!(one(0.0, 0.3, 2.0, 14.0, 14.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PricingConfig::new(0.0, 1.0).is_ok());
        assert!(!PricingConfig::new(0.0, 1.0).unwrap().analysis_range_ok());
        assert!(PricingConfig::new(1.5, 1.0).is_err());
        assert!(PricingConfig::new(0.5, 0.0).is_err());
        assert!(PricingConfig::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn negative_prices_rejected() {
        assert!(matches!(PriceVector::new(vec![1.0, -0.5]), Err(Error::Contract(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let cfg = PricingConfig::new(0.1, 1.0).unwrap();
        assert!(price_update(&PriceVector::zeros(2), &[1.0], &[1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn telescoping_without_discount() {
        // α = 0, every update stays positive: β Σ Γ(τ) = Λ(k).
        let cfg = PricingConfig::new(0.0, 0.5).unwrap();
        let caps = [10.0];
        let loads = [12.0, 11.0, 9.5, 13.0];
        let mut prices = PriceVector::zeros(1);
        let mut cumulative = 0.0;
        for phi in loads {
            prices = price_update(&prices, &[phi], &caps, &cfg).unwrap();
            cumulative += phi - caps[0];
            assert!(prices.as_slice()[0] > 0.0);
            assert!((cfg.beta * cumulative - prices.as_slice()[0]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prices_stay_non_negative_and_monotone_in_load(
            lambda in prop::collection::vec(0.0f64..50.0, 1..6),
            alpha in 0.0f64..=1.0,
            beta in 1e-4f64..10.0,
            base in prop::collection::vec(0.0f64..100.0, 6),
            bump in prop::collection::vec(0.0f64..10.0, 6),
        ) {
            let r = lambda.len();
            let cfg = PricingConfig::new(alpha, beta).unwrap();
            let caps = vec![14.0; r];
            let prices = PriceVector::new(lambda).unwrap();
            let lo = price_update(&prices, &base[..r], &caps, &cfg).unwrap();
            let hi_loads: Vec<f64> = base[..r].iter().zip(&bump).map(|(a, b)| a + b).collect();
            let hi = price_update(&prices, &hi_loads, &caps, &cfg).unwrap();
            for (a, b) in lo.as_slice().iter().zip(hi.as_slice()) {
                prop_assert!(*a >= 0.0);
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn permuting_resources_permutes_prices(
            lambda in prop::collection::vec(0.0f64..5.0, 4),
            loads in prop::collection::vec(0.0f64..30.0, 4),
            caps in prop::collection::vec(1.0f64..20.0, 4),
            shift in 0usize..4,
        ) {
            let cfg = PricingConfig::new(0.01, 0.3).unwrap();
            let rot = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(shift); w };
            let direct = price_update(&PriceVector::new(lambda.clone()).unwrap(), &loads, &caps, &cfg).unwrap();
            let permuted = price_update(
                &PriceVector::new(rot(&lambda)).unwrap(), &rot(&loads), &rot(&caps), &cfg,
            ).unwrap();
            prop_assert_eq!(rot(direct.as_slice()), permuted.as_slice().to_vec());
        }
    }
}
