//! Per-neighbor trust bookkeeping.
//!
//! Every observer keeps one [`NeighborTrustRecord`] per neighbor with
//! success/failure counters for the three routing phases (route request,
//! route reply, data). Each phase collapses to a ratio in `[-1, 1]`, and the
//! trust level is the weighted sum of the three ratios with factorial weights
//! `1!, 2!, 3!`. A neighbor whose trust level falls strictly below the
//! threshold is classified as misbehaving, provided enough evidence exists.
//!
//! A phase without observations contributes zero to the trust level. That
//! neutral value is not used against a neighbor: it is only declared
//! misbehaving when it would stay below the threshold even if every
//! unobserved phase turned out perfect. Otherwise a relay seen only in route
//! discovery (at most `1 + 2 = 3` points) would be condemned for lack of data.

use std::fmt;

use crate::NodeId;

/// Routing phase a trust observation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Rreq,
    Rrep,
    Data,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Rreq, Phase::Rrep, Phase::Data];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Rreq => "rreq",
            Phase::Rrep => "rrep",
            Phase::Data => "data",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
}

/// One column of the success/failure table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseCounters {
    pub success: u64,
    pub failure: u64,
}

impl PhaseCounters {
    pub fn new(success: u64, failure: u64) -> Self {
        PhaseCounters { success, failure }
    }

    pub fn total(&self) -> u64 {
        self.success + self.failure
    }

    /// `(success - failure) / (success + failure)`, or 0 without evidence.
    pub fn ratio(&self) -> f64 {
        phase_ratio(*self)
    }
}

/// Counters an observer holds about a single neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTrustRecord {
    pub neighbor: NodeId,
    pub rreq: PhaseCounters,
    pub rrep: PhaseCounters,
    pub data: PhaseCounters,
}

impl NeighborTrustRecord {
    pub fn new(neighbor: NodeId) -> Self {
        NeighborTrustRecord {
            neighbor,
            rreq: PhaseCounters::default(),
            rrep: PhaseCounters::default(),
            data: PhaseCounters::default(),
        }
    }

    pub fn with_counters(
        neighbor: NodeId,
        rreq: (u64, u64),
        rrep: (u64, u64),
        data: (u64, u64),
    ) -> Self {
        NeighborTrustRecord {
            neighbor,
            rreq: PhaseCounters::new(rreq.0, rreq.1),
            rrep: PhaseCounters::new(rrep.0, rrep.1),
            data: PhaseCounters::new(data.0, data.1),
        }
    }

    pub fn counters(&self, phase: Phase) -> &PhaseCounters {
        match phase {
            Phase::Rreq => &self.rreq,
            Phase::Rrep => &self.rrep,
            Phase::Data => &self.data,
        }
    }

    fn counters_mut(&mut self, phase: Phase) -> &mut PhaseCounters {
        match phase {
            Phase::Rreq => &mut self.rreq,
            Phase::Rrep => &mut self.rrep,
            Phase::Data => &mut self.data,
        }
    }

    /// Sum of all six counters.
    pub fn total_observations(&self) -> u64 {
        self.rreq.total() + self.rrep.total() + self.data.total()
    }

    /// Increments exactly one counter.
    pub fn record_observation(&mut self, phase: Phase, outcome: Outcome) {
        let counters = self.counters_mut(phase);
        match outcome {
            Outcome::Success => counters.success += 1,
            Outcome::Failure => counters.failure += 1,
        }
    }
}

/// Weights and threshold of the trust level computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustParams {
    pub weight_rreq: f64,
    pub weight_rrep: f64,
    pub weight_data: f64,
    /// Neighbors strictly below this trust level are misbehaving.
    /// `f64::NEG_INFINITY` disables classification.
    pub threshold: f64,
    /// Minimum total observations before any verdict is issued.
    pub min_observations: u64,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            weight_rreq: 1.0,
            weight_rrep: 2.0,
            weight_data: 6.0,
            threshold: 5.0,
            min_observations: 10,
        }
    }
}

impl TrustParams {
    pub fn weight_sum(&self) -> f64 {
        self.weight_rreq + self.weight_rrep + self.weight_data
    }

    /// Checks that weights are positive and the threshold is reachable.
    pub fn validate(&self) -> Result<(), String> {
        for (name, w) in [
            ("weight_rreq", self.weight_rreq),
            ("weight_rrep", self.weight_rrep),
            ("weight_data", self.weight_data),
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(format!("{name} must be a positive finite number"));
            }
        }
        if self.threshold.is_nan() {
            return Err("threshold must be a number".into());
        }
        if self.threshold >= self.weight_sum() {
            return Err(format!(
                "threshold {} is not below the weight sum {}; no node could be trusted",
                self.threshold,
                self.weight_sum()
            ));
        }
        Ok(())
    }

    /// True when classification can never yield `Misbehaving`.
    pub fn classification_disabled(&self) -> bool {
        self.threshold == f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrustVerdict {
    Trusted { tl_value: f64 },
    Misbehaving { tl_value: f64 },
    InsufficientEvidence,
}

impl TrustVerdict {
    pub fn is_misbehaving(&self) -> bool {
        matches!(self, TrustVerdict::Misbehaving { .. })
    }

    pub fn tl_value(&self) -> Option<f64> {
        match *self {
            TrustVerdict::Trusted { tl_value } | TrustVerdict::Misbehaving { tl_value } => {
                Some(tl_value)
            }
            TrustVerdict::InsufficientEvidence => None,
        }
    }
}

/// Normalized phase ratio in `[-1, 1]`; zero when nothing was observed.
pub fn phase_ratio(counters: PhaseCounters) -> f64 {
    let total = counters.success + counters.failure;
    if total == 0 {
        return 0.0;
    }
    (counters.success as f64 - counters.failure as f64) / total as f64
}

/// Weighted sum of the three phase ratios.
pub fn trust_level(record: &NeighborTrustRecord, params: &TrustParams) -> f64 {
    params.weight_rreq * phase_ratio(record.rreq)
        + params.weight_rrep * phase_ratio(record.rrep)
        + params.weight_data * phase_ratio(record.data)
}

pub fn classify(record: &NeighborTrustRecord, params: &TrustParams) -> TrustVerdict {
    if record.total_observations() < params.min_observations {
        return TrustVerdict::InsufficientEvidence;
    }
    let tl_value = trust_level(record, params);
    if tl_value >= params.threshold {
        TrustVerdict::Trusted { tl_value }
    } else if best_case_trust_level(record, params) < params.threshold {
        TrustVerdict::Misbehaving { tl_value }
    } else {
        TrustVerdict::InsufficientEvidence
    }
}

/// Trust level with every unobserved phase counted as fully successful.
pub fn best_case_trust_level(record: &NeighborTrustRecord, params: &TrustParams) -> f64 {
    let q = |c: PhaseCounters| if c.total() == 0 { 1.0 } else { phase_ratio(c) };
    params.weight_rreq * q(record.rreq)
        + params.weight_rrep * q(record.rrep)
        + params.weight_data * q(record.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E: NodeId = NodeId(4);

    fn node_e_record() -> NeighborTrustRecord {
        NeighborTrustRecord::with_counters(E, (4, 0), (4, 0), (900, 100))
    }

    /// Independent evaluation of the trust level in exact integer arithmetic,
    /// converted to floating point only at the very end.
    fn exact_tl(rec: [(u64, u64); 3], weights: [i128; 3]) -> f64 {
        // TL = sum_i w_i (s_i - f_i) / (s_i + f_i); empty phases contribute 0.
        let mut num: i128 = 0;
        let mut den: i128 = 1;
        for ((s, f), w) in rec.into_iter().zip(weights) {
            let (s, f) = (s as i128, f as i128);
            if s + f == 0 {
                continue;
            }
            let (n_i, d_i) = (w * (s - f), s + f);
            num = num * d_i + n_i * den;
            den *= d_i;
        }
        num as f64 / den as f64
    }

    #[test]
    fn record_observation_increments_one_counter() {
        let mut rec = NeighborTrustRecord::new(E);
        rec.record_observation(Phase::Data, Outcome::Success);
        assert_eq!(
            rec,
            NeighborTrustRecord::with_counters(E, (0, 0), (0, 0), (1, 0))
        );

        let mut rec = NeighborTrustRecord::with_counters(E, (0, 0), (0, 0), (899, 100));
        rec.record_observation(Phase::Data, Outcome::Success);
        assert_eq!(rec.data, PhaseCounters::new(900, 100));
        assert_eq!(rec.rreq, PhaseCounters::default());
    }

    #[test]
    fn replaying_node_e_observations_rebuilds_table() {
        let mut rec = NeighborTrustRecord::new(E);
        for _ in 0..4 {
            rec.record_observation(Phase::Rreq, Outcome::Success);
            rec.record_observation(Phase::Rrep, Outcome::Success);
        }
        for _ in 0..900 {
            rec.record_observation(Phase::Data, Outcome::Success);
        }
        for _ in 0..100 {
            rec.record_observation(Phase::Data, Outcome::Failure);
        }
        assert_eq!(rec, node_e_record());
    }

    #[test]
    fn phase_ratio_examples() {
        assert_eq!(phase_ratio(PhaseCounters::new(4, 0)), 1.0);
        assert!((phase_ratio(PhaseCounters::new(900, 100)) - 0.8).abs() < 1e-15);
        assert_eq!(phase_ratio(PhaseCounters::new(0, 0)), 0.0);
        for k in 1..50 {
            assert_eq!(phase_ratio(PhaseCounters::new(k, k)), 0.0);
        }
    }

    #[test]
    fn trust_level_examples() {
        let p = TrustParams::default();
        assert!((trust_level(&node_e_record(), &p) - 7.8).abs() < 1e-12);

        let all_ok = NeighborTrustRecord::with_counters(E, (3, 0), (1, 0), (17, 0));
        assert_eq!(trust_level(&all_ok, &p), 9.0);

        let dropper = NeighborTrustRecord::with_counters(E, (10, 0), (10, 0), (0, 50));
        assert_eq!(exact_tl([(10, 0), (10, 0), (0, 50)], [1, 2, 6]), -3.0);
        assert_eq!(trust_level(&dropper, &p), -3.0);

        let boundary = NeighborTrustRecord::with_counters(E, (4, 0), (4, 0), (800, 400));
        assert_eq!(exact_tl([(4, 0), (4, 0), (800, 400)], [1, 2, 6]), 5.0);
        assert_eq!(trust_level(&boundary, &p), 5.0);
    }

    #[test]
    fn classify_examples() {
        let p = TrustParams::default();
        assert!(matches!(
            classify(&node_e_record(), &p),
            TrustVerdict::Trusted { .. }
        ));

        let below = NeighborTrustRecord::with_counters(E, (4, 0), (4, 0), (799, 401));
        // 3 + 6 * 398/1200 = 4.99
        let oracle = exact_tl([(4, 0), (4, 0), (799, 401)], [1, 2, 6]);
        assert!((oracle - 4.99).abs() < 1e-12);
        match classify(&below, &p) {
            TrustVerdict::Misbehaving { tl_value } => assert!((tl_value - oracle).abs() < 1e-12),
            v => panic!("expected misbehaving, got {v:?}"),
        }

        assert_eq!(
            classify(&NeighborTrustRecord::new(E), &p),
            TrustVerdict::InsufficientEvidence
        );

        let boundary = NeighborTrustRecord::with_counters(E, (4, 0), (4, 0), (800, 400));
        assert_eq!(
            classify(&boundary, &p),
            TrustVerdict::Trusted { tl_value: 5.0 }
        );
    }

    #[test]
    fn spurious_failure_keeps_honest_neighbor_trusted() {
        let p = TrustParams::default();
        // 1 + 2 + 6 * (98 / 100)
        let rec = NeighborTrustRecord::with_counters(E, (10, 0), (10, 0), (99, 1));
        let tl = trust_level(&rec, &p);
        assert!((tl - 8.88).abs() < 1e-12);
        let rec = NeighborTrustRecord::with_counters(E, (10, 0), (10, 0), (98, 2));
        assert!((trust_level(&rec, &p) - 8.76).abs() < 1e-12);
        assert!(!classify(&rec, &p).is_misbehaving());
    }

    #[test]
    fn unobserved_phases_do_not_condemn() {
        let p = TrustParams::default();
        let relay = NeighborTrustRecord::with_counters(E, (10, 0), (0, 0), (0, 0));
        assert_eq!(trust_level(&relay, &p), 1.0);
        assert_eq!(classify(&relay, &p), TrustVerdict::InsufficientEvidence);
        let lazy = NeighborTrustRecord::with_counters(E, (0, 10), (0, 0), (0, 0));
        assert_eq!(classify(&lazy, &p), TrustVerdict::InsufficientEvidence);
        // data dropper seen only from upstream: no reply-phase evidence
        let dropper = NeighborTrustRecord::with_counters(E, (9, 0), (0, 0), (0, 1));
        assert_eq!(
            classify(&dropper, &p),
            TrustVerdict::Misbehaving { tl_value: -5.0 }
        );
    }

    #[test]
    fn disabled_threshold_never_flags() {
        let p = TrustParams {
            threshold: f64::NEG_INFINITY,
            ..TrustParams::default()
        };
        let rec = NeighborTrustRecord::with_counters(E, (0, 40), (0, 40), (0, 40));
        assert!(!classify(&rec, &p).is_misbehaving());
        assert!(p.classification_disabled());
    }

    #[test]
    fn params_validation() {
        assert!(TrustParams::default().validate().is_ok());
        let unreachable = TrustParams {
            threshold: 9.0,
            ..TrustParams::default()
        };
        assert!(unreachable.validate().is_err());
        let zero_weight = TrustParams {
            weight_rrep: 0.0,
            ..TrustParams::default()
        };
        assert!(zero_weight.validate().is_err());
    }

    /// Every record with all six counters in `0..=20`.
    #[test]
    fn exhaustive_small_counters_match_exact_oracle() {
        let p = TrustParams::default();
        let mut rec = NeighborTrustRecord::new(E);
        let mut checked = 0u64;
        for rs in 0..=20u64 {
            for rf in 0..=20u64 {
                for ps in 0..=20u64 {
                    for pf in 0..=20u64 {
                        for ds in 0..=20u64 {
                            for df in 0..=20u64 {
                                rec.rreq = PhaseCounters::new(rs, rf);
                                rec.rrep = PhaseCounters::new(ps, pf);
                                rec.data = PhaseCounters::new(ds, df);
                                let got = trust_level(&rec, &p);
                                let want = exact_tl([(rs, rf), (ps, pf), (ds, df)], [1, 2, 6]);
                                assert!(
                                    (got - want).abs() <= 1e-12,
                                    "{rs},{rf}/{ps},{pf}/{ds},{df}: {got} vs {want}"
                                );
                                checked += 1;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(checked, 21u64.pow(6));
    }

    fn counters() -> impl Strategy<Value = (u64, u64)> {
        prop_oneof![(0u64..30, 0u64..30), (0u64..1_000_000, 0u64..1_000_000),]
    }

    fn record() -> impl Strategy<Value = NeighborTrustRecord> {
        (counters(), counters(), counters())
            .prop_map(|(a, b, c)| NeighborTrustRecord::with_counters(E, a, b, c))
    }

    fn phase() -> impl Strategy<Value = Phase> {
        prop_oneof![Just(Phase::Rreq), Just(Phase::Rrep), Just(Phase::Data)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn ratio_bounds_and_extremes((s, f) in counters()) {
            let r = phase_ratio(PhaseCounters::new(s, f));
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert_eq!(r == 1.0, f == 0 && s > 0);
            prop_assert_eq!(r == -1.0, s == 0 && f > 0);
        }

        #[test]
        fn trust_level_bounded(rec in record()) {
            let tl = trust_level(&rec, &TrustParams::default());
            prop_assert!((-9.0..=9.0).contains(&tl));
        }

        #[test]
        fn success_never_lowers_failure_never_raises(rec in record(), ph in phase()) {
            let p = TrustParams::default();
            let before = trust_level(&rec, &p);
            let mut up = rec.clone();
            up.record_observation(ph, Outcome::Success);
            prop_assert!(trust_level(&up, &p) >= before);
            let mut down = rec.clone();
            down.record_observation(ph, Outcome::Failure);
            prop_assert!(trust_level(&down, &p) <= before);
        }

        #[test]
        fn classify_is_pure(rec in record()) {
            let p = TrustParams::default();
            prop_assert_eq!(classify(&rec, &p), classify(&rec.clone(), &p));
        }

        #[test]
        fn verdict_consistent_with_threshold(rec in record()) {
            let p = TrustParams::default();
            match classify(&rec, &p) {
                TrustVerdict::Misbehaving { tl_value } => prop_assert!(tl_value < p.threshold),
                TrustVerdict::Trusted { tl_value } => prop_assert!(tl_value >= p.threshold),
                TrustVerdict::InsufficientEvidence => prop_assert!(
                    rec.total_observations() < p.min_observations
                        || best_case_trust_level(&rec, &p) >= p.threshold
                ),
            }
        }
    }
}
