//! Federation contract, service catalog and resource arithmetic.
//!
//! Resource amounts are integral abstract units. Monetary quantities
//! (revenues, fees, overcharge scales, reject thresholds) are exact
//! rationals so that price comparisons never drift.

use std::fmt;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Exact monetary amount.
pub type Money = Rational64;

/// Converts a monetary amount to `f64` for value-function arithmetic.
pub fn money_to_f64(m: Money) -> f64 {
    m.to_f64().unwrap_or(f64::NAN)
}

/// Nonnegative integer quantity per resource type.
///
/// Comparison with [`ResourceVector::fits`] is the element-wise partial
/// order: `a` fits in `b` iff every coordinate of `a` is at most the
/// matching coordinate of `b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(Vec<u32>);

impl ResourceVector {
    pub fn new(amounts: Vec<u32>) -> Self {
        ResourceVector(amounts)
    }

    pub fn zeros(len: usize) -> Self {
        ResourceVector(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// True iff `self ≤ available` element-wise.
    pub fn fits(&self, available: &ResourceVector) -> Result<bool, DomainError> {
        fits(self, available)
    }

    /// `self - other`, or `None` if any coordinate would go negative.
    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a.checked_sub(*b)).collect::<Option<Vec<_>>>().map(ResourceVector)
    }

    /// Element-wise `max(self - other, 0)`.
    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| a.saturating_sub(*b)).collect())
    }

    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self + k·other`.
    pub fn add_scaled(&self, other: &ResourceVector, k: u32) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| a + k * b).collect())
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "]")
    }
}

impl From<Vec<u32>> for ResourceVector {
    fn from(v: Vec<u32>) -> Self {
        ResourceVector(v)
    }
}

/// Element-wise `demand ≤ available`.
pub fn fits(demand: &ResourceVector, available: &ResourceVector) -> Result<bool, DomainError> {
    if demand.len() != available.len() {
        return Err(DomainError::LengthMismatch { expected: available.len(), found: demand.len() });
    }
    Ok(demand.0.iter().zip(&available.0).all(|(d, a)| d <= a))
}

/// A catalog entry: one network-service type.
#[derive(Clone, Debug, PartialEq)]
pub struct ServiceType {
    /// Aggregate resource demand of one instance.
    pub demand: ResourceVector,
    /// Revenue earned by admitting one instance.
    pub revenue: Money,
    /// Fee charged by the provider domain for hosting one instance within quota.
    pub delegation_fee: Money,
    /// Multiplier applied to the fee when the plain quota is exceeded.
    pub overcharge_scale: Money,
    /// Poisson arrival rate (requests per time unit).
    pub arrival_rate: f64,
    /// Per-instance departure rate (inverse mean lifetime).
    pub departure_rate: f64,
}

impl ServiceType {
    fn validate(&self, index: usize, resources: usize) -> Result<(), DomainError> {
        let bad = |reason: &str| DomainError::InvalidService { index: index + 1, reason: reason.to_string() };
        if self.demand.len() != resources {
            return Err(bad("demand length differs from the number of resource types"));
        }
        if self.demand.is_zero() {
            return Err(bad("demand must have at least one positive entry"));
        }
        if self.revenue < Money::zero() || self.delegation_fee < Money::zero() {
            return Err(bad("revenue and delegation fee must be nonnegative"));
        }
        if self.overcharge_scale < Money::from_integer(1) {
            return Err(bad("overcharge scale must be at least 1"));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(bad("arrival rate must be positive"));
        }
        if !(self.departure_rate.is_finite() && self.departure_rate > 0.0) {
            return Err(bad("departure rate must be positive"));
        }
        Ok(())
    }
}

/// The federation contract between the consumer domain (CD) and the
/// provider domain (PD), together with the service catalog.
#[derive(Clone, Debug, PartialEq)]
pub struct FederationContract {
    local_capacity: ResourceVector,
    quota: ResourceVector,
    reject_thresholds: Vec<Money>,
    extended_quota: ResourceVector,
    catalog: Vec<ServiceType>,
}

impl FederationContract {
    pub fn new(
        local_capacity: ResourceVector,
        quota: ResourceVector,
        reject_thresholds: Vec<Money>,
        catalog: Vec<ServiceType>,
    ) -> Result<Self, DomainError> {
        let r = local_capacity.len();
        if r == 0 {
            return Err(DomainError::InvalidContract("at least one resource type is required".into()));
        }
        if quota.len() != r || reject_thresholds.len() != r {
            return Err(DomainError::InvalidContract(format!(
                "local capacity has {r} resource types but quota has {} and thresholds have {}",
                quota.len(),
                reject_thresholds.len()
            )));
        }
        if let Some(t) = reject_thresholds.iter().find(|t| **t < Money::from_integer(1)) {
            return Err(DomainError::InvalidContract(format!("reject threshold {t} is below 1")));
        }
        if catalog.is_empty() {
            return Err(DomainError::InvalidContract("the service catalog is empty".into()));
        }
        for (i, svc) in catalog.iter().enumerate() {
            svc.validate(i, r)?;
        }
        let extended_quota = ResourceVector(
            quota
                .0
                .iter()
                .zip(&reject_thresholds)
                .map(|(&q, &t)| {
                    (t * Money::from_integer(i64::from(q)))
                        .floor()
                        .to_integer()
                        .try_into()
                        .map_err(|_| DomainError::InvalidContract("extended quota overflows".into()))
                })
                .collect::<Result<Vec<u32>, _>>()?,
        );
        Ok(FederationContract { local_capacity, quota, reject_thresholds, extended_quota, catalog })
    }

    pub fn local_capacity(&self) -> &ResourceVector {
        &self.local_capacity
    }

    pub fn quota(&self) -> &ResourceVector {
        &self.quota
    }

    pub fn reject_thresholds(&self) -> &[Money] {
        &self.reject_thresholds
    }

    /// `floor(Θ ⊗ C̄^p)`: the hard admission limit in the provider domain.
    pub fn extended_quota(&self) -> &ResourceVector {
        &self.extended_quota
    }

    pub fn catalog(&self) -> &[ServiceType] {
        &self.catalog
    }

    pub fn service(&self, i: usize) -> &ServiceType {
        &self.catalog[i]
    }

    pub fn num_services(&self) -> usize {
        self.catalog.len()
    }

    pub fn num_resources(&self) -> usize {
        self.local_capacity.len()
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.catalog.iter().map(|s| s.arrival_rate).sum()
    }

    pub fn max_revenue(&self) -> Money {
        self.catalog.iter().map(|s| s.revenue).max().unwrap_or_else(Money::zero)
    }
}

/// Cost of delegating one instance of `svc` given the currently available
/// plain quota and extended quota in the provider domain.
///
/// Returns `None` when the demand exceeds the extended quota in some
/// coordinate, i.e. the provider would refuse the delegation.
pub fn delegation_cost(
    svc: &ServiceType,
    available_quota: &ResourceVector,
    available_extended: &ResourceVector,
) -> Option<Money> {
    if !svc.demand.fits(available_extended).ok()? {
        return None;
    }
    if svc.demand.fits(available_quota).ok()? {
        Some(svc.delegation_fee)
    } else {
        Some(svc.overcharge_scale * svc.delegation_fee)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(v: &[u32]) -> ResourceVector {
        ResourceVector::new(v.to_vec())
    }

    fn type1() -> ServiceType {
        ServiceType {
            demand: rv(&[4, 2, 1]),
            revenue: Money::from_integer(95),
            delegation_fee: Money::from_integer(80),
            overcharge_scale: Money::from_integer(2),
            arrival_rate: 10.0,
            departure_rate: 4.0,
        }
    }

    #[test]
    fn delegation_cost_within_quota_is_plain_fee() {
        let c = delegation_cost(&type1(), &rv(&[10, 15, 25]), &rv(&[20, 30, 50]));
        assert_eq!(c, Some(Money::from_integer(80)));
    }

    #[test]
    fn delegation_cost_over_quota_is_overcharged() {
        let c = delegation_cost(&type1(), &rv(&[2, 15, 25]), &rv(&[20, 30, 50]));
        assert_eq!(c, Some(Money::from_integer(160)));
    }

    #[test]
    fn delegation_cost_beyond_threshold_is_infeasible() {
        assert_eq!(delegation_cost(&type1(), &rv(&[2, 15, 25]), &rv(&[3, 30, 50])), None);
    }

    #[test]
    fn fits_examples() {
        assert!(fits(&rv(&[4, 2, 1]), &rv(&[30, 25, 30])).unwrap());
        assert!(fits(&rv(&[0, 0, 0]), &rv(&[0, 0, 0])).unwrap());
        assert!(!fits(&rv(&[4, 2, 1]), &rv(&[3, 25, 30])).unwrap());
        assert!(matches!(fits(&rv(&[1, 2]), &rv(&[1, 2, 3])), Err(DomainError::LengthMismatch { .. })));
    }

    #[test]
    fn partial_order_is_not_total() {
        let a = rv(&[1, 3]);
        let b = rv(&[2, 2]);
        assert!(!a.fits(&b).unwrap());
        assert!(!b.fits(&a).unwrap());
    }

    #[test]
    fn extended_quota_floors_fractional_thresholds() {
        let t = vec![Money::new(3, 2), Money::from_integer(1), Money::new(7, 4)];
        let c = FederationContract::new(rv(&[30, 25, 30]), rv(&[5, 15, 25]), t, vec![type1()]).unwrap();
        // 1.5*5 = 7.5 -> 7; 1.75*25 = 43.75 -> 43
        assert_eq!(c.extended_quota(), &rv(&[7, 15, 43]));
    }

    #[test]
    fn unit_thresholds_keep_quota() {
        let c = FederationContract::new(
            rv(&[3]),
            rv(&[5]),
            vec![Money::from_integer(1)],
            vec![ServiceType { demand: rv(&[1]), ..type1() }],
        )
        .unwrap();
        assert_eq!(c.extended_quota(), c.quota());
    }

    #[test]
    fn contract_rejects_bad_inputs() {
        let mut s = type1();
        s.overcharge_scale = Money::new(1, 2);
        let three = vec![Money::from_integer(1); 3];
        assert!(FederationContract::new(rv(&[1, 1, 1]), rv(&[1, 1, 1]), three.clone(), vec![s]).is_err());
        let mut s = type1();
        s.demand = rv(&[0, 0, 0]);
        assert!(FederationContract::new(rv(&[1, 1, 1]), rv(&[1, 1, 1]), three.clone(), vec![s]).is_err());
        let low = vec![Money::new(1, 2); 3];
        assert!(FederationContract::new(rv(&[1, 1, 1]), rv(&[1, 1, 1]), low, vec![type1()]).is_err());
        assert!(FederationContract::new(rv(&[1, 1]), rv(&[1, 1, 1]), three, vec![type1()]).is_err());
    }
}
