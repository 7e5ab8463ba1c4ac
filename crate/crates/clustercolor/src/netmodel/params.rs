use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            other => Err(Error::InvalidParams(format!("unknown profile `{other}`"))),
        }
    }
}

/// Every tunable constant of the pipeline. Stages read constants only through this struct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    pub profile: Profile,
    /// Almost-clique precision.
    pub epsilon: f64,
    /// Precision of the external-degree estimates.
    pub delta: f64,
    /// Cabal threshold on the average estimated external degree.
    pub ell: f64,
    /// Below this maximum degree the pipeline takes the low-degree path.
    pub delta_low: f64,
    /// Slack constant of slack generation.
    pub gamma_sg: f64,
    /// r_K = reserve_multiplier * max(e_K, ell).
    pub reserve_multiplier: f64,
    /// Slack generation and colorful matching avoid the first `sg_exclusion * eps * Delta` colors.
    pub sg_exclusion: f64,
    /// Donor-set size for put-aside coloring.
    pub ell_s: u64,
    /// Color block width used by donations.
    pub block_size: u64,
    /// Per-link budget is `c_bw * ceil(log2 n)` bits per round.
    pub c_bw: u32,
    /// Fingerprint failure exponent: estimates hold with probability 1 - n^-c_prob.
    pub c_prob: f64,
    /// Retry limit for validated stages.
    pub retries: u32,
    /// Palette ranges hold `c_range * ceil(log2 n)` colors.
    pub c_range: u32,
    /// Sparse nodes must satisfy zeta_v >= c_sparse * eps^2 * Delta.
    pub c_sparse: f64,
    /// Buddy-predicate precision (a constant fraction of epsilon in the asymptotic profile).
    pub buddy_xi: f64,
    /// Optional cap on fingerprint length (desk runtime guard).
    pub fingerprint_t_max: Option<u64>,
    /// Candidate donors activate with probability donor_activation * ell_s^3 / b.
    pub donor_activation: f64,
    /// Random groups need |K| / x >= groups_c * log2 n.
    pub groups_c: f64,
    /// Number of colorful-matching iterations is `matching_rounds / eps`.
    pub matching_rounds: f64,
    /// Fingerprint matching runs `6 * matching_c * log n / (eps * tau)` trials.
    #[serde(default = "one")]
    pub matching_c: f64,
    /// Put-aside candidates join with probability `put_aside_candidate * ell^2 / Delta`.
    #[serde(default = "one")]
    pub put_aside_candidate: f64,
    /// Safe candidates join `P_K` with probability `put_aside_subsample / ell`.
    #[serde(default = "one")]
    pub put_aside_subsample: f64,
}

fn one() -> f64 {
    1.0
}

fn log2n(n: usize) -> f64 {
    (n.max(2) as f64).log2()
}

impl ParamSet {
    /// Constants as written for the asymptotic analysis; `n` fixes the log-dependent ones.
    pub fn paper(n: usize) -> Self {
        let lg = log2n(n);
        let gamma_sg = 0.1;
        let ell = lg.powf(1.1);
        let ell_s = ell.powi(3).ceil() as u64;
        let block_size = (256.0 * (ell_s as f64).powi(6)).min(u64::MAX as f64) as u64;
        Self {
            profile: Profile::Paper,
            epsilon: 1.0 / 2000.0,
            delta: gamma_sg / 300.0,
            ell,
            delta_low: lg.powi(21),
            gamma_sg,
            reserve_multiplier: 250.0,
            sg_exclusion: 300.0,
            ell_s,
            block_size,
            c_bw: 32,
            c_prob: 2.0,
            retries: 5,
            c_range: 4,
            c_sparse: 1.0,
            buddy_xi: 1.0 / 2000.0 / 6.0,
            fingerprint_t_max: None,
            donor_activation: 50.0,
            groups_c: 1.0,
            matching_rounds: 1.0,
            matching_c: 1.0,
            put_aside_candidate: 16000.0,
            put_aside_subsample: 0.125,
        }
    }

    /// Desk-scale profile: same structure, constants shrunk so that Δ in the hundreds is meaningful.
    pub fn desk() -> Self {
        let epsilon = 1.0 / 128.0;
        Self {
            profile: Profile::Desk,
            epsilon,
            delta: epsilon / 2.0,
            ell: 6.0,
            delta_low: 16.0,
            gamma_sg: 0.2,
            reserve_multiplier: 2.0,
            sg_exclusion: 19.0,
            ell_s: 3,
            block_size: 64,
            c_bw: 32,
            c_prob: 2.0,
            retries: 5,
            c_range: 4,
            c_sparse: 1.0,
            buddy_xi: 0.3,
            fingerprint_t_max: Some(2048),
            donor_activation: 1.0,
            groups_c: 1.0,
            matching_rounds: 0.5,
            matching_c: 1.0,
            put_aside_candidate: 1.5,
            put_aside_subsample: 6.0,
        }
    }

    pub fn for_profile(profile: Profile, n: usize) -> Self {
        match profile {
            Profile::Paper => Self::paper(n),
            Profile::Desk => Self::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        match self.profile {
            Profile::Paper => {
                if (self.epsilon - 1.0 / 2000.0).abs() > 1e-15 {
                    return bad("paper profile pins epsilon = 1/2000");
                }
                if (self.delta - self.gamma_sg / 300.0).abs() > 1e-15 {
                    return bad("paper profile pins delta = gamma_sg / 300");
                }
                let expect_b = (256.0 * (self.ell_s as f64).powi(6)).min(u64::MAX as f64) as u64;
                if self.block_size != expect_b {
                    return bad("paper profile pins b = 256 * ell_s^6");
                }
            }
            Profile::Desk => {
                if !(self.epsilon > 0.0 && self.epsilon < 0.01) {
                    return bad("desk profile needs epsilon in (0, 1/100)");
                }
                if !(self.delta > 0.0 && self.delta < self.epsilon) {
                    return bad("desk profile needs delta in (0, epsilon)");
                }
            }
        }
        if !(self.gamma_sg > 0.0 && self.gamma_sg < 1.0) {
            return bad("gamma_sg must lie in (0, 1)");
        }
        if !(self.buddy_xi > 0.0 && self.buddy_xi < 1.0) {
            return bad("buddy_xi must lie in (0, 1)");
        }
        if self.c_bw == 0 || self.c_range == 0 || self.ell_s == 0 || self.block_size == 0 {
            return bad("c_bw, c_range, ell_s and block_size must be positive");
        }
        if self.ell <= 0.0 || self.reserve_multiplier <= 0.0 || self.sg_exclusion < 0.0 {
            return bad("ell and reserve multiplier must be positive");
        }
        if self.c_prob < 0.0 || self.c_sparse < 0.0 || self.matching_rounds <= 0.0 || self.matching_c <= 0.0 {
            return bad("c_prob, c_sparse must be non-negative and matching_rounds positive");
        }
        if self.put_aside_candidate <= 0.0 || self.put_aside_subsample <= 0.0 {
            return bad("put-aside sampling constants must be positive");
        }
        if self.fingerprint_t_max == Some(0) {
            return bad("fingerprint_t_max must be positive when set");
        }
        Ok(())
    }

    /// ⌈log₂ n⌉, at least 1.
    pub fn log_n(n: usize) -> u32 {
        let mut bits = 0u32;
        while (1usize << bits) < n.max(2) {
            bits += 1;
        }
        bits
    }

    /// Per-link per-round budget in bits.
    pub fn bandwidth(&self, n: usize) -> u64 {
        u64::from(self.c_bw) * u64::from(Self::log_n(n))
    }

    /// Fingerprint length for precision `xi` in an `n`-node graph.
    pub fn sketch_length(&self, xi: f64, n: usize) -> usize {
        let t = sketch_length_formula(xi, self.c_prob, n);
        match self.fingerprint_t_max {
            Some(cap) => t.min(cap as usize),
            None => t,
        }
    }

    /// Number of excluded low colors in slack generation and colorful matching.
    pub fn excluded_prefix(&self, delta: usize) -> u32 {
        (self.sg_exclusion * self.epsilon * delta as f64).ceil() as u32
    }

    pub fn reserved(&self, e_k: f64) -> u32 {
        (self.reserve_multiplier * e_k.max(self.ell)).ceil() as u32
    }
}

/// t = ⌈200 ξ⁻² (c_prob ln n + ln 6)⌉.
pub fn sketch_length_formula(xi: f64, c_prob: f64, n: usize) -> usize {
    let n = n.max(2) as f64;
    (200.0 / (xi * xi) * (c_prob * n.ln() + 6f64.ln())).ceil() as usize
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::desk()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        ParamSet::desk().validate().unwrap();
        ParamSet::paper(1000).validate().unwrap();
    }

    #[test]
    fn desk_rejects_large_epsilon() {
        let mut p = ParamSet::desk();
        p.epsilon = 0.05;
        assert!(p.validate().is_err());
        let mut p = ParamSet::desk();
        p.delta = p.epsilon;
        assert!(p.validate().is_err());
    }

    #[test]
    fn paper_pins_epsilon() {
        let mut p = ParamSet::paper(1000);
        p.epsilon = 0.001;
        assert!(p.validate().is_err());
    }

    #[test]
    fn reserved_example() {
        let mut p = ParamSet::paper(1000);
        p.ell = 8.0;
        assert_eq!(p.reserved(5.0), 2000);
    }

    #[test]
    fn sketch_length_matches_formula() {
        let t = sketch_length_formula(0.15, 2.0, 1000);
        let expect = (200.0 / 0.0225 * (2.0 * 1000f64.ln() + 6f64.ln())).ceil() as usize;
        assert_eq!(t, expect);
    }

    #[test]
    fn log_n_rounds_up() {
        assert_eq!(ParamSet::log_n(1), 1);
        assert_eq!(ParamSet::log_n(2), 1);
        assert_eq!(ParamSet::log_n(3), 2);
        assert_eq!(ParamSet::log_n(1024), 10);
        assert_eq!(ParamSet::log_n(1025), 11);
    }
}
