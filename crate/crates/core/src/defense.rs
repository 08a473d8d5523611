//! Defense selection and dispatch over a round's updates.

use crate::asmr::{self, DetectionVerdict};
use crate::baselines;
use crate::error::Result;
use crate::geometry::{self, UpdateVector};

/// Aggregation defense applied before averaging.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Defense {
    /// Plain averaging; every update is kept.
    None,
    /// Density-based detection with the largest-gap boundary.
    Asmr,
    /// Multi-Krum selection assuming `assumed_malicious` bad clients.
    MKrum { assumed_malicious: usize },
    /// Spectral filtering assuming `assumed_malicious` bad clients.
    Dnc { assumed_malicious: usize },
    /// Cosine bipartition keeping the larger cluster.
    Cfl,
}

impl Defense {
    /// Runs the defense and reports which clients to keep.
    pub fn detect(&self, updates: &[UpdateVector]) -> Result<DetectionVerdict> {
        match *self {
            Defense::None => {
                let order = geometry::canonical_order(updates)?;
                Ok(DetectionVerdict::keep_all(
                    order.iter().map(|&i| updates[i].client_id()),
                ))
            }
            Defense::Asmr => asmr::detect(updates),
            Defense::MKrum { assumed_malicious } => {
                baselines::mkrum_select(updates, assumed_malicious)
            }
            Defense::Dnc { assumed_malicious } => baselines::dnc_detect(updates, assumed_malicious),
            Defense::Cfl => baselines::cfl_split(updates),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Defense::None => "none",
            Defense::Asmr => "asmr",
            Defense::MKrum { .. } => "mkrum",
            Defense::Dnc { .. } => "dnc",
            Defense::Cfl => "cfl",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ClientId;

    #[test]
    fn none_keeps_every_client() {
        let updates: Vec<UpdateVector> = (0..4)
            .map(|i| UpdateVector::new(ClientId(i), 0, vec![i as f64, 1.0]).unwrap())
            .collect();
        let verdict = Defense::None.detect(&updates).unwrap();
        assert_eq!(verdict.kept().len(), 4);
        assert!(verdict.excluded().is_empty());
    }

    #[test]
    fn none_still_rejects_duplicate_ids() {
        let updates = vec![
            UpdateVector::new(ClientId(1), 0, vec![1.0]).unwrap(),
            UpdateVector::new(ClientId(1), 0, vec![2.0]).unwrap(),
        ];
        assert!(Defense::None.detect(&updates).is_err());
    }

    #[test]
    fn names_round_trip_with_dispatch() {
        assert_eq!(Defense::Asmr.name(), "asmr");
        assert_eq!(
            Defense::MKrum {
                assumed_malicious: 3
            }
            .name(),
            "mkrum"
        );
        assert_eq!(
            Defense::Dnc {
                assumed_malicious: 3
            }
            .name(),
            "dnc"
        );
        assert_eq!(Defense::Cfl.name(), "cfl");
        assert_eq!(Defense::None.name(), "none");
    }
}
