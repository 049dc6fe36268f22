//! AES-128 with every round state kept, plus the Hamming leakage helpers.
//!
//! State bytes are column-major as in FIPS-197: byte `i` of a block sits in
//! row `i % 4`, column `i / 4`. Everything downstream (trace synthesis and the
//! last-round hypothesis) uses this indexing.

use crate::error::{Error, Result};

pub type Block = [u8; 16];

pub const ROUNDS: usize = 10;

#[rustfmt::skip]
pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

pub const INV_SBOX: [u8; 256] = invert_sbox();

const fn invert_sbox() -> [u8; 256] {
    let mut inv = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        inv[SBOX[i] as usize] = i as u8;
        i += 1;
    }
    inv
}

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

/// Where each state byte ends up after ShiftRows.
pub const SHIFT_ROWS_IMAGE: [usize; 16] = shift_rows_image();

const fn shift_rows_image() -> [usize; 16] {
    let mut img = [0usize; 16];
    let mut i = 0;
    while i < 16 {
        let row = i % 4;
        let col = i / 4;
        img[i] = row + 4 * ((col + 4 - row) % 4);
        i += 1;
    }
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySchedule {
    pub round_keys: [Block; 11],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundTrace {
    /// `states[0]` is the state after the initial AddRoundKey, `states[r]` the
    /// output of round `r`.
    pub states: [Block; 11],
    pub ciphertext: Block,
}

impl RoundTrace {
    /// Full-state Hamming distance of the register update clocked by round
    /// `round` (1..=10).
    pub fn round_distance(&self, round: usize) -> u32 {
        block_distance(&self.states[round - 1], &self.states[round])
    }
}

pub fn block_from_slice(bytes: &[u8]) -> Result<Block> {
    bytes.try_into().map_err(|_| {
        Error::InvalidArgument(format!("expected 16 bytes, got {}", bytes.len()))
    })
}

/// Parses a 32-digit hex string into a block.
pub fn parse_hex_block(s: &str) -> Result<Block> {
    let s = s.trim();
    if s.len() != 32 || !s.is_ascii() {
        return Err(Error::InvalidArgument(format!(
            "expected 32 hex digits, got {:?}",
            s
        )));
    }
    let mut out = [0u8; 16];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::InvalidArgument(format!("invalid hex block {s:?}")))?;
    }
    Ok(out)
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sub_word(w: [u8; 4]) -> [u8; 4] {
    w.map(|b| SBOX[b as usize])
}

pub fn expand_key(key: &[u8]) -> Result<KeySchedule> {
    let key = block_from_slice(key)?;
    let mut words = [[0u8; 4]; 44];
    for (i, w) in words.iter_mut().take(4).enumerate() {
        w.copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    for i in 4..44 {
        let mut temp = words[i - 1];
        if i % 4 == 0 {
            temp.rotate_left(1);
            temp = sub_word(temp);
            temp[0] ^= RCON[i / 4 - 1];
        }
        for j in 0..4 {
            words[i][j] = words[i - 4][j] ^ temp[j];
        }
    }
    let mut round_keys = [[0u8; 16]; 11];
    for (r, rk) in round_keys.iter_mut().enumerate() {
        for c in 0..4 {
            rk[4 * c..4 * c + 4].copy_from_slice(&words[4 * r + c]);
        }
    }
    Ok(KeySchedule { round_keys })
}

/// Recovers the cipher key from the last round key by running the schedule
/// backwards.
pub fn invert_key_schedule(last_round_key: &Block) -> Block {
    let mut words = [[0u8; 4]; 44];
    for c in 0..4 {
        words[40 + c].copy_from_slice(&last_round_key[4 * c..4 * c + 4]);
    }
    for i in (4..44).rev() {
        let mut temp = words[i - 1];
        if i % 4 == 0 {
            temp.rotate_left(1);
            temp = sub_word(temp);
            temp[0] ^= RCON[i / 4 - 1];
        }
        for j in 0..4 {
            words[i - 4][j] = words[i][j] ^ temp[j];
        }
    }
    let mut key = [0u8; 16];
    for c in 0..4 {
        key[4 * c..4 * c + 4].copy_from_slice(&words[c]);
    }
    key
}

fn xtime(b: u8) -> u8 {
    (b << 1) ^ if b & 0x80 != 0 { 0x1b } else { 0 }
}

fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    p
}

fn add_round_key(state: &mut Block, rk: &Block) {
    for (s, k) in state.iter_mut().zip(rk) {
        *s ^= k;
    }
}

fn sub_bytes(state: &mut Block) {
    for s in state.iter_mut() {
        *s = SBOX[*s as usize];
    }
}

fn shift_rows(state: &mut Block) {
    let old = *state;
    for (i, &dst) in SHIFT_ROWS_IMAGE.iter().enumerate() {
        state[dst] = old[i];
    }
}

fn mix_columns(state: &mut Block) {
    for c in 0..4 {
        let col = [state[4 * c], state[4 * c + 1], state[4 * c + 2], state[4 * c + 3]];
        let all = col[0] ^ col[1] ^ col[2] ^ col[3];
        for r in 0..4 {
            state[4 * c + r] = col[r] ^ all ^ xtime(col[r] ^ col[(r + 1) % 4]);
        }
    }
}

pub fn encrypt_with_states(key: &[u8], pt: &[u8]) -> Result<RoundTrace> {
    let schedule = expand_key(key)?;
    let pt = block_from_slice(pt)?;
    Ok(encrypt_with_schedule(&schedule, &pt))
}

pub fn encrypt_with_schedule(schedule: &KeySchedule, pt: &Block) -> RoundTrace {
    let mut states = [[0u8; 16]; 11];
    let mut state = *pt;
    add_round_key(&mut state, &schedule.round_keys[0]);
    states[0] = state;
    for round in 1..=ROUNDS {
        sub_bytes(&mut state);
        shift_rows(&mut state);
        if round != ROUNDS {
            mix_columns(&mut state);
        }
        add_round_key(&mut state, &schedule.round_keys[round]);
        states[round] = state;
    }
    RoundTrace {
        states,
        ciphertext: state,
    }
}

/// Inverse cipher. Only used to cross-check the encryption path.
pub fn decrypt_block(schedule: &KeySchedule, ct: &Block) -> Block {
    let mut state = *ct;
    for round in (1..=ROUNDS).rev() {
        add_round_key(&mut state, &schedule.round_keys[round]);
        if round != ROUNDS {
            let s = state;
            for c in 0..4 {
                for r in 0..4 {
                    state[4 * c + r] = gmul(s[4 * c + r], 0x0e)
                        ^ gmul(s[4 * c + (r + 1) % 4], 0x0b)
                        ^ gmul(s[4 * c + (r + 2) % 4], 0x0d)
                        ^ gmul(s[4 * c + (r + 3) % 4], 0x09);
                }
            }
        }
        let old = state;
        for (i, &src) in SHIFT_ROWS_IMAGE.iter().enumerate() {
            state[i] = old[src];
        }
        for s in state.iter_mut() {
            *s = INV_SBOX[*s as usize];
        }
    }
    add_round_key(&mut state, &schedule.round_keys[0]);
    state
}

pub fn hamming_weight(v: u8) -> u32 {
    v.count_ones()
}

pub fn hamming_distance(a: u8, b: u8) -> u32 {
    hamming_weight(a ^ b)
}

pub fn block_distance(a: &Block, b: &Block) -> u32 {
    a.iter().zip(b).map(|(x, y)| hamming_distance(*x, *y)).sum()
}

/// Last-round Hamming-distance model: the round-9 state byte at `byte_pos`,
/// reconstructed from the ciphertext under `key_guess`, against the
/// ciphertext byte that overwrites it.
///
/// The guess is for byte `SHIFT_ROWS_IMAGE[byte_pos]` of the last round key.
pub fn last_round_hypothesis(ct: &Block, byte_pos: usize, key_guess: u16) -> Result<u32> {
    if byte_pos >= 16 || key_guess > 255 {
        return Err(Error::InvalidArgument(format!(
            "byte_pos {byte_pos} / key_guess {key_guess} out of range"
        )));
    }
    Ok(last_round_hd(ct, byte_pos, key_guess as u8))
}

#[inline]
pub(crate) fn last_round_hd(ct: &Block, byte_pos: usize, key_guess: u8) -> u32 {
    let before = INV_SBOX[(ct[SHIFT_ROWS_IMAGE[byte_pos]] ^ key_guess) as usize];
    hamming_distance(ct[byte_pos], before)
}

/// Last-round key byte that the hypothesis at `byte_pos` is keyed by.
pub fn true_guess(schedule: &KeySchedule, byte_pos: usize) -> u8 {
    schedule.round_keys[ROUNDS][SHIFT_ROWS_IMAGE[byte_pos]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbox_inverse() {
        for v in 0..=255u8 {
            assert_eq!(INV_SBOX[SBOX[v as usize] as usize], v);
        }
    }

    #[test]
    fn shift_rows_is_a_permutation() {
        let mut seen = SHIFT_ROWS_IMAGE;
        seen.sort_unstable();
        assert_eq!(seen, core::array::from_fn(|i| i));
        // Row 0 stays put; row 1 moves one column left.
        assert_eq!(SHIFT_ROWS_IMAGE[0], 0);
        assert_eq!(SHIFT_ROWS_IMAGE[5], 1);
        assert_eq!(SHIFT_ROWS_IMAGE[1], 13);
    }

    #[test]
    fn hex_parsing() {
        let b = parse_hex_block("000102030405060708090a0b0c0d0e0f").unwrap();
        assert_eq!(b[15], 0x0f);
        assert_eq!(to_hex(&b), "000102030405060708090a0b0c0d0e0f");
        assert!(parse_hex_block("00").is_err());
        assert!(parse_hex_block("zz0102030405060708090a0b0c0d0e0f").is_err());
    }

    #[test]
    fn wrong_lengths_rejected() {
        assert!(expand_key(&[0u8; 15]).is_err());
        assert!(encrypt_with_states(&[0u8; 16], &[0u8; 17]).is_err());
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_weight(0x00), 0);
        assert_eq!(hamming_weight(0xff), 8);
        assert_eq!(hamming_weight(0xa5), 4);
        assert_eq!(hamming_distance(0x5a, 0x5a), 0);
        assert_eq!(hamming_distance(0x00, 0xff), 8);
        assert_eq!(hamming_distance(0x0f, 0x3c), 4);
    }

    #[test]
    fn hypothesis_range_checks() {
        let ct = [0u8; 16];
        assert!(last_round_hypothesis(&ct, 16, 0).is_err());
        assert!(last_round_hypothesis(&ct, 0, 256).is_err());
        assert!(last_round_hypothesis(&ct, 15, 255).unwrap() <= 8);
    }

    #[test]
    fn key_schedule_inverts() {
        let key = parse_hex_block("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
        let ks = expand_key(&key).unwrap();
        assert_eq!(invert_key_schedule(&ks.round_keys[10]), key);
    }
}
