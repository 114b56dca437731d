//! Bit-exact model of multiple-input signature registers and the
//! dual-MISR-plus-counter signature block, including scan-out and capture
//! window arithmetic.
//!
//! Conventions (normative for this tool):
//!
//! * MISR stages are indexed 1..K. Input j enters stage j, so inputs occupy
//!   the first M stages. The update for one step is
//!
//!   ```text
//!   next[1] = (XOR over taps t of state[t]) XOR input[1]
//!   next[i] = state[i-1] XOR input[i]          for 2 <= i <= M
//!   next[i] = state[i-1]                       for M <  i <= K
//!   ```
//!
//! * The reset state is all zeros except stage K, which is 1.
//! * Textual bit strings print stage 1 leftmost; hex prints stage K down to
//!   stage 1, left-padded to ceil(K/4) digits.
//! * The block counter counts mod 2N. MISR 1 resets when the counter wraps
//!   to 0, MISR 2 when it reaches N; both reset at power-on. Scan-out reads
//!   the state after the detection cycle's step.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("input arity mismatch: got {got}, MISR expects {expected}")]
    Arity { got: usize, expected: usize },
    #[error("scan file line {line}: {msg}")]
    ScanFormat { line: usize, msg: String },
}

/// Feedback tap sets yielding maximal-length sequences, indexed by stage
/// count K (1-indexed stages, entry 0 unused). Standard table of primitive
/// polynomials for Fibonacci-style registers, K up to 64.
pub const MAX_TAP_TABLE: [&[usize]; 65] = [
    &[],
    &[1],
    &[2, 1],
    &[3, 2],
    &[4, 3],
    &[5, 3],
    &[6, 5],
    &[7, 6],
    &[8, 6, 5, 4],
    &[9, 5],
    &[10, 7],
    &[11, 9],
    &[12, 6, 4, 1],
    &[13, 4, 3, 1],
    &[14, 5, 3, 1],
    &[15, 14],
    &[16, 15, 13, 4],
    &[17, 14],
    &[18, 11],
    &[19, 6, 2, 1],
    &[20, 17],
    &[21, 19],
    &[22, 21],
    &[23, 18],
    &[24, 23, 22, 17],
    &[25, 22],
    &[26, 6, 2, 1],
    &[27, 5, 2, 1],
    &[28, 25],
    &[29, 27],
    &[30, 6, 4, 1],
    &[31, 28],
    &[32, 22, 2, 1],
    &[33, 20],
    &[34, 27, 2, 1],
    &[35, 33],
    &[36, 25],
    &[37, 5, 4, 3, 2, 1],
    &[38, 6, 5, 1],
    &[39, 35],
    &[40, 38, 21, 19],
    &[41, 38],
    &[42, 41, 20, 19],
    &[43, 42, 38, 37],
    &[44, 43, 18, 17],
    &[45, 44, 42, 41],
    &[46, 45, 26, 25],
    &[47, 42],
    &[48, 47, 21, 20],
    &[49, 40],
    &[50, 49, 24, 23],
    &[51, 50, 36, 35],
    &[52, 49],
    &[53, 52, 38, 37],
    &[54, 53, 18, 17],
    &[55, 31],
    &[56, 55, 35, 34],
    &[57, 50],
    &[58, 39],
    &[59, 58, 38, 37],
    &[60, 59],
    &[61, 60, 46, 45],
    &[62, 61, 6, 5],
    &[63, 62],
    &[64, 63, 61, 60],
];

/// Taps for a K-stage MISR. Table entries for K <= 64; beyond that a
/// {K, K-1} fallback is used (not guaranteed maximal — callers should warn).
pub fn taps_for(k: usize) -> BTreeSet<usize> {
    if k >= 1 && k <= 64 {
        MAX_TAP_TABLE[k].iter().copied().collect()
    } else {
        [k, k - 1].into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MisrConfig {
    /// Stage count.
    pub k: usize,
    /// Input count, M <= K.
    pub m: usize,
    /// Feedback tap stage indices, each in 1..=K.
    pub taps: BTreeSet<usize>,
}

impl MisrConfig {
    pub fn new(k: usize, m: usize, taps: BTreeSet<usize>) -> Self {
        assert!(m <= k, "M must not exceed K");
        assert!(!taps.is_empty() && taps.iter().all(|&t| t >= 1 && t <= k));
        MisrConfig { k, m, taps }
    }

    /// Config with table taps.
    pub fn with_table_taps(k: usize, m: usize) -> Self {
        MisrConfig::new(k, m, taps_for(k))
    }
}

/// MISR register contents; bit index 0 holds stage 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MisrState {
    pub bits: Vec<bool>,
}

impl MisrState {
    pub fn zero(k: usize) -> Self {
        MisrState {
            bits: vec![false; k],
        }
    }

    pub fn stage(&self, i: usize) -> bool {
        self.bits[i - 1]
    }

    pub fn xor(&self, other: &MisrState) -> MisrState {
        MisrState {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    /// Hex string, stage K down to stage 1, left-padded.
    pub fn to_hex(&self) -> String {
        bits_to_hex(&self.bits)
    }

    pub fn from_hex(s: &str, k: usize) -> Option<MisrState> {
        bits_from_hex(s, k).map(|bits| MisrState { bits })
    }
}

/// Hex-encode a bit vector; bit 0 is the least significant bit of the last
/// digit, output left-padded to ceil(len/4) digits.
pub fn bits_to_hex(bits: &[bool]) -> String {
    let k = bits.len();
    let digits = k.div_ceil(4).max(1);
    let mut out = String::with_capacity(digits);
    for d in (0..digits).rev() {
        let mut nib = 0u8;
        for b in 0..4 {
            let pos = d * 4 + b;
            if pos < k && bits[pos] {
                nib |= 1 << b;
            }
        }
        out.push(char::from_digit(u32::from(nib), 16).unwrap());
    }
    out
}

/// Inverse of [`bits_to_hex`] for a known length.
pub fn bits_from_hex(s: &str, len: usize) -> Option<Vec<bool>> {
    let mut bits = vec![false; len];
    let digits: Vec<u32> = s.chars().map(|c| c.to_digit(16)).collect::<Option<_>>()?;
    if digits.len() != len.div_ceil(4).max(1) {
        return None;
    }
    for (pos, d) in digits.iter().rev().enumerate() {
        for b in 0..4 {
            let bit = pos * 4 + b;
            if d >> b & 1 != 0 {
                if bit >= len {
                    return None;
                }
                bits[bit] = true;
            }
        }
    }
    Some(bits)
}

impl fmt::Display for MisrState {
    /// Bit string, stage 1 leftmost.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{}", if *b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Step the MISR once with M input bits.
pub fn misr_step(
    config: &MisrConfig,
    state: &MisrState,
    inputs: &[bool],
) -> Result<MisrState, SignatureError> {
    if inputs.len() != config.m {
        return Err(SignatureError::Arity {
            got: inputs.len(),
            expected: config.m,
        });
    }
    debug_assert_eq!(state.bits.len(), config.k);
    let mut next = vec![false; config.k];
    let mut fb = false;
    for &t in &config.taps {
        fb ^= state.stage(t);
    }
    next[0] = fb ^ inputs.first().copied().unwrap_or(false);
    for i in 2..=config.k {
        let shifted = state.stage(i - 1);
        next[i - 1] = if i <= config.m {
            shifted ^ inputs[i - 1]
        } else {
            shifted
        };
    }
    Ok(MisrState { bits: next })
}

/// The defined starting state: all zeros except stage K = 1.
pub fn reset_state(config: &MisrConfig) -> MisrState {
    let mut bits = vec![false; config.k];
    bits[config.k - 1] = true;
    MisrState { bits }
}

/// One dual-MISR signature block at run time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureBlockState {
    pub config: MisrConfig,
    pub misr1: MisrState,
    pub misr2: MisrState,
    /// mod-2N cycle counter.
    pub counter: u64,
    /// Capture window target.
    pub n: u64,
    /// Counter width C = ceil(log2(2N)).
    pub c_width: u32,
}

impl SignatureBlockState {
    /// Power-on state: both MISRs reset, counter 0.
    pub fn power_on(config: MisrConfig, n: u64) -> Self {
        assert!(n >= 2);
        let r = reset_state(&config);
        SignatureBlockState {
            misr1: r.clone(),
            misr2: r,
            counter: 0,
            n,
            c_width: ceil_log2(2 * n),
            config,
        }
    }
}

pub fn ceil_log2(x: u64) -> u32 {
    assert!(x >= 1);
    64 - (x - 1).leading_zeros()
}

/// Step a signature block one cycle: both MISRs compress the same inputs,
/// then the counter advances; when it wraps to 0 MISR 1 is reset, and when
/// it reaches N MISR 2 is reset.
pub fn sig_block_step(
    state: &SignatureBlockState,
    inputs: &[bool],
) -> Result<SignatureBlockState, SignatureError> {
    let mut next = state.clone();
    next.misr1 = misr_step(&state.config, &state.misr1, inputs)?;
    next.misr2 = misr_step(&state.config, &state.misr2, inputs)?;
    next.counter = (state.counter + 1) % (2 * state.n);
    if next.counter == 0 {
        next.misr1 = reset_state(&state.config);
    } else if next.counter == state.n {
        next.misr2 = reset_state(&state.config);
    }
    Ok(next)
}

/// Which MISR a window refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MisrSel {
    Misr1,
    Misr2,
}

/// Window lengths implied by a scanned counter value `c`:
/// `w1 = c`, `w2 = (c - N) mod 2N`, `T = max`, and which MISR achieves it.
/// Valid once the global cycle count has reached N; the caller clamps for
/// cold starts (see [`windows_at`]).
pub fn window_lengths(c: u64, n: u64) -> (u64, u64, u64, MisrSel) {
    debug_assert!(c < 2 * n);
    let w1 = c;
    let w2 = (c + 2 * n - n) % (2 * n);
    if w1 >= w2 {
        (w1, w2, w1, MisrSel::Misr1)
    } else {
        (w1, w2, w2, MisrSel::Misr2)
    }
}

/// Window arithmetic with cold-start clamping: before the global cycle
/// count reaches the nominal window, both MISRs only cover `global` cycles.
/// Returns (w1, w2, T, selected, short_window).
pub fn windows_at(c: u64, n: u64, global: u64) -> (u64, u64, u64, MisrSel, bool) {
    let (w1, w2, _, _) = window_lengths(c, n);
    let w1 = w1.min(global);
    let w2 = w2.min(global);
    let (t, sel) = if w1 >= w2 {
        (w1, MisrSel::Misr1)
    } else {
        (w2, MisrSel::Misr2)
    };
    (w1, w2, t, sel, t < n)
}

/// Scanned signature values of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanEntry {
    pub sig_id: String,
    pub counter: u64,
    pub misr1: MisrState,
    pub misr2: MisrState,
}

impl ScanEntry {
    pub fn selected(&self, sel: MisrSel) -> &MisrState {
        match sel {
            MisrSel::Misr1 => &self.misr1,
            MisrSel::Misr2 => &self.misr2,
        }
    }
}

/// Everything scanned out when the test halts: one entry per planned
/// signature block plus the global detection cycle.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScanSnapshot {
    pub detect_cycle: u64,
    pub entries: Vec<ScanEntry>,
}

impl ScanSnapshot {
    pub fn entry(&self, sig_id: &str) -> Option<&ScanEntry> {
        self.entries.iter().find(|e| e.sig_id == sig_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Independent bitwise reference for the update equations, written
    /// directly from the stage recurrences (no shared code with
    /// `misr_step`).
    fn reference_step(k: usize, m: usize, taps: &[usize], s: &[bool], x: &[bool]) -> Vec<bool> {
        let mut out = vec![false; k];
        for i in 1..=k {
            out[i - 1] = if i == 1 {
                let fb = taps.iter().fold(false, |acc, &t| acc ^ s[t - 1]);
                fb ^ x[0]
            } else if i <= m {
                s[i - 2] ^ x[i - 1]
            } else {
                s[i - 2]
            };
        }
        out
    }

    fn fig4_config() -> MisrConfig {
        MisrConfig::new(6, 3, [5, 6].into_iter().collect())
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let cfg = fig4_config();
        let z = MisrState::zero(6);
        assert_eq!(misr_step(&cfg, &z, &[false; 3]).unwrap(), z);
    }

    #[test]
    fn six_bit_example_step() {
        // state 000001 (stage 6 = 1), inputs (1,0,0) -> 000000
        let cfg = fig4_config();
        let s = reset_state(&cfg);
        assert_eq!(s.to_string(), "000001");
        let next = misr_step(&cfg, &s, &[true, false, false]).unwrap();
        assert_eq!(next.to_string(), "000000");
        // agrees with the reference routine
        let r = reference_step(6, 3, &[5, 6], &s.bits, &[true, false, false]);
        assert_eq!(next.bits, r);
    }

    #[test]
    fn matches_reference_on_random_cases() {
        let mut rng = stream(11, 0);
        for _ in 0..200 {
            let k = 1 + rng.next_below(16) as usize;
            let m = 1 + rng.next_below(k as u64) as usize;
            let taps: Vec<usize> = taps_for(k).into_iter().collect();
            let cfg = MisrConfig::new(k, m, taps.iter().copied().collect());
            let s = MisrState {
                bits: (0..k).map(|_| rng.next_bit()).collect(),
            };
            let x: Vec<bool> = (0..m).map(|_| rng.next_bit()).collect();
            let got = misr_step(&cfg, &s, &x).unwrap();
            assert_eq!(got.bits, reference_step(k, m, &taps, &s.bits, &x));
        }
    }

    #[test]
    fn linearity_spot_check() {
        let cfg = MisrConfig::with_table_taps(12, 5);
        let mut rng = stream(23, 0);
        for _ in 0..100 {
            let rand_state = |rng: &mut crate::rng::XorShift64Star| MisrState {
                bits: (0..12).map(|_| rng.next_bit()).collect(),
            };
            let s = rand_state(&mut rng);
            let s2 = rand_state(&mut rng);
            let x: Vec<bool> = (0..5).map(|_| rng.next_bit()).collect();
            let x2: Vec<bool> = (0..5).map(|_| rng.next_bit()).collect();
            let xx: Vec<bool> = x.iter().zip(&x2).map(|(a, b)| a ^ b).collect();
            let lhs = misr_step(&cfg, &s.xor(&s2), &xx).unwrap();
            let rhs = misr_step(&cfg, &s, &x)
                .unwrap()
                .xor(&misr_step(&cfg, &s2, &x2).unwrap());
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn reset_convention() {
        assert_eq!(reset_state(&MisrConfig::with_table_taps(6, 3)).to_string(), "000001");
        assert_eq!(reset_state(&MisrConfig::with_table_taps(2, 1)).to_string(), "01");
    }

    #[test]
    fn reset_orbit_is_nonzero() {
        let cfg = fig4_config();
        let mut s = reset_state(&cfg);
        for _ in 0..cfg.k {
            s = misr_step(&cfg, &s, &[false; 3]).unwrap();
            assert_ne!(s, MisrState::zero(6), "dead state reached");
        }
    }

    #[test]
    fn table_taps_are_maximal_up_to_20() {
        // From reset with zero inputs the register is a pure LFSR; a
        // maximal tap set cycles through all 2^K - 1 nonzero states.
        for k in 2..=20usize {
            let cfg = MisrConfig::with_table_taps(k, 1);
            let start = reset_state(&cfg);
            let mut s = start.clone();
            let mut period = 0u64;
            loop {
                s = misr_step(&cfg, &s, &[false]).unwrap();
                period += 1;
                if s == start {
                    break;
                }
                assert!(period <= 1u64 << k, "K={k} runaway");
            }
            assert_eq!(period, (1u64 << k) - 1, "K={k} not maximal");
        }
    }

    #[test]
    fn dual_misr_reset_phases() {
        let n = 4;
        let cfg = fig4_config();
        let mut st = SignatureBlockState::power_on(cfg.clone(), n);
        assert_eq!(st.c_width, 3);
        let inputs = [true, true, false];
        // counter N-1 -> N resets misr2
        for _ in 0..n - 1 {
            st = sig_block_step(&st, &inputs).unwrap();
        }
        assert_eq!(st.counter, n - 1);
        st = sig_block_step(&st, &inputs).unwrap();
        assert_eq!(st.counter, n);
        assert_eq!(st.misr2, reset_state(&cfg));
        assert_ne!(st.misr1, reset_state(&cfg));
        // counter 2N-1 -> 0 resets misr1
        for _ in 0..n - 1 {
            st = sig_block_step(&st, &inputs).unwrap();
        }
        assert_eq!(st.counter, 2 * n - 1);
        st = sig_block_step(&st, &inputs).unwrap();
        assert_eq!(st.counter, 0);
        assert_eq!(st.misr1, reset_state(&cfg));
    }

    #[test]
    fn zero_input_block_replay_matches_plain_misr() {
        // Constant-zero inputs for 2N cycles from power-on: misr1 evolves
        // as a plain MISR over its window w1.
        let n = 8;
        let cfg = fig4_config();
        let mut st = SignatureBlockState::power_on(cfg.clone(), n);
        for _ in 0..2 * n {
            st = sig_block_step(&st, &[false; 3]).unwrap();
        }
        // counter wrapped to 0 at the last step, so misr1 = reset
        assert_eq!(st.counter, 0);
        assert_eq!(st.misr1, reset_state(&cfg));
        // misr2 was reset at counter N and then stepped N more times
        let mut expect = reset_state(&cfg);
        for _ in 0..n {
            expect = misr_step(&cfg, &expect, &[false; 3]).unwrap();
        }
        assert_eq!(st.misr2, expect);
    }

    #[test]
    fn window_examples() {
        assert_eq!(window_lengths(5, 4), (5, 1, 5, MisrSel::Misr1));
        assert_eq!(window_lengths(2, 4), (2, 6, 6, MisrSel::Misr2));
    }

    #[test]
    fn window_guarantee_once_warm() {
        for n in [4u64, 8, 32] {
            for g in n..6 * n {
                let c = g % (2 * n);
                let (_, _, t, _, short) = windows_at(c, n, g);
                assert!(t >= n && t < 2 * n, "N={n} g={g}: T={t}");
                assert!(!short);
            }
        }
    }

    #[test]
    fn cold_start_is_clamped() {
        let (w1, w2, t, sel, short) = windows_at(3, 8, 3);
        assert_eq!((w1, w2, t), (3, 3, 3));
        assert_eq!(sel, MisrSel::Misr1);
        assert!(short);
    }

    #[test]
    fn hex_round_trip() {
        let cfg = MisrConfig::with_table_taps(6, 3);
        let r = reset_state(&cfg);
        // stage 6 is the MSB of the hex form
        assert_eq!(r.to_hex(), "20");
        assert_eq!(MisrState::from_hex("20", 6).unwrap(), r);
        let mut rng = stream(5, 1);
        for _ in 0..50 {
            let k = 1 + rng.next_below(70) as usize;
            let s = MisrState {
                bits: (0..k).map(|_| rng.next_bit()).collect(),
            };
            assert_eq!(MisrState::from_hex(&s.to_hex(), k).unwrap(), s);
        }
    }
}
