//! Correlation power analysis on the last AES round.

use serde::Serialize;

use super::preprocess::AlignedMatrix;
use crate::aes::{
    expand_key, invert_key_schedule, to_hex, true_guess, Block, INV_SBOX, SHIFT_ROWS_IMAGE,
};
use crate::error::{Error, Result};

/// Pearson correlation coefficient, two-pass centred form.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs two equal-length vectors of at least 2 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ByteResult {
    pub byte_pos: usize,
    /// max |rho| over the window, per guess.
    #[serde(skip)]
    pub scores: [f64; 256],
    pub best_guess: u8,
    pub best_score: f64,
    /// Guesses whose hypothesis had no variance or met only flat columns.
    pub undefined_guesses: usize,
    pub true_guess: Option<u8>,
    pub rank: Option<usize>,
}

impl ByteResult {
    fn new(byte_pos: usize, scores: [f64; 256], undefined: usize, truth: Option<u8>) -> Self {
        let mut best = 0usize;
        for g in 1..256 {
            if scores[g] > scores[best] {
                best = g;
            }
        }
        ByteResult {
            byte_pos,
            scores,
            best_guess: best as u8,
            best_score: scores[best],
            undefined_guesses: undefined,
            true_guess: truth,
            rank: truth.map(|t| rank_of(&scores, t)),
        }
    }
}

/// 1 + number of other guesses scoring at least as high. Ties count against
/// the true guess.
pub fn rank_of(scores: &[f64; 256], guess: u8) -> usize {
    let s = scores[guess as usize];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(g, &v)| g != guess as usize && v >= s)
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpaResult {
    pub n_traces: usize,
    pub window: (usize, usize),
    pub bytes: Vec<ByteResult>,
    /// Best guess of the last round key, in key byte order.
    #[serde(serialize_with = "hex_block")]
    pub recovered_round_key: Block,
    /// Cipher key implied by the recovered last round key.
    #[serde(serialize_with = "hex_block")]
    pub recovered_key: Block,
}

fn hex_block<S: serde::Serializer>(b: &Block, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&to_hex(b))
}

impl CpaResult {
    pub fn ranks(&self) -> Option<Vec<usize>> {
        self.bytes.iter().map(|b| b.rank).collect()
    }

    /// Every byte ranks its true guess first.
    pub fn broken(&self) -> bool {
        self.bytes.iter().all(|b| b.rank == Some(1))
    }

    pub fn mean_rank(&self) -> Option<f64> {
        let r = self.ranks()?;
        Some(r.iter().sum::<usize>() as f64 / r.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// One row per byte position and guess.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("byte_pos,guess,score,is_true\n");
        for b in &self.bytes {
            for (g, s) in b.scores.iter().enumerate() {
                let t = b.true_guess == Some(g as u8);
                out.push_str(&format!("{},{},{:.9},{}\n", b.byte_pos, g, s, t as u8));
            }
        }
        out
    }
}

/// Columns of the matrix between `lo` and `hi` inclusive, each centred on
/// its mean.
fn centred_columns(am: &AlignedMatrix, lo: usize, hi: usize) -> Vec<(Vec<f64>, f64)> {
    (lo..=hi)
        .map(|c| {
            let mut col = am.column(c);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            for v in &mut col {
                *v -= mean;
            }
            let ss = col.iter().map(|v| v * v).sum::<f64>();
            (col, ss)
        })
        .collect()
}

fn check_window(am: &AlignedMatrix, window: (usize, usize)) -> Result<()> {
    let (lo, hi) = window;
    if lo > hi || hi >= am.n_cols {
        return Err(Error::InvalidArgument(format!(
            "window {lo}..={hi} outside {} columns",
            am.n_cols
        )));
    }
    if am.n_rows() < 2 {
        return Err(Error::InvalidArgument("CPA needs at least 2 traces".into()));
    }
    Ok(())
}

#[inline]
fn hyp(c: u8, v: u8, g: u8) -> u32 {
    (c ^ INV_SBOX[(v ^ g) as usize]).count_ones()
}

/// Scores of the 256 guesses at one byte position by direct summation.
/// Second value counts undefined guesses.
pub fn byte_scores_direct(
    am: &AlignedMatrix,
    byte_pos: usize,
    window: (usize, usize),
) -> Result<([f64; 256], usize)> {
    check_window(am, window)?;
    let cols = centred_columns(am, window.0, window.1);
    Ok(scores_from_columns(am, byte_pos, &cols))
}

fn scores_from_columns(
    am: &AlignedMatrix,
    byte_pos: usize,
    cols: &[(Vec<f64>, f64)],
) -> ([f64; 256], usize) {
    let n = am.n_rows() as f64;
    let sr = SHIFT_ROWS_IMAGE[byte_pos];
    let pairs: Vec<(u8, u8)> = am.ciphertexts.iter().map(|ct| (ct[byte_pos], ct[sr])).collect();
    let mut scores = [0.0f64; 256];
    let mut undefined = 0;
    let mut sxh = vec![0.0f64; cols.len()];
    for g in 0..=255u8 {
        let (mut sh, mut shh) = (0.0f64, 0.0f64);
        sxh.iter_mut().for_each(|v| *v = 0.0);
        for (i, &(c, v)) in pairs.iter().enumerate() {
            let h = hyp(c, v, g) as f64;
            sh += h;
            shh += h * h;
            for (acc, (col, _)) in sxh.iter_mut().zip(cols) {
                *acc += h * col[i];
            }
        }
        let (best, flat) = best_abs(&sxh, cols.iter().map(|c| c.1), shh - sh * sh / n);
        scores[g as usize] = best;
        undefined += flat as usize;
    }
    (scores, undefined)
}

/// max |rho| over columns given centred cross sums. The second value is
/// true when no column gave a defined correlation.
fn best_abs(sxh: &[f64], col_ss: impl Iterator<Item = f64>, shh: f64) -> (f64, bool) {
    if shh <= 1e-9 {
        return (0.0, true);
    }
    let mut best = 0.0f64;
    let mut any = false;
    for (cross, ss) in sxh.iter().zip(col_ss) {
        if ss <= 0.0 {
            continue;
        }
        any = true;
        best = best.max((cross / (shh * ss).sqrt()).abs().min(1.0));
    }
    (best, !any)
}

/// Same scores as [`byte_scores_direct`], computed from per-class partial
/// sums: traces are partitioned by the ciphertext byte feeding the inverse
/// S-box and the hypothesis is split into its eight bits, so the cost of the
/// guess loop no longer depends on the trace count. Suited to wide windows.
pub fn byte_scores_partitioned(
    am: &AlignedMatrix,
    byte_pos: usize,
    window: (usize, usize),
) -> Result<([f64; 256], usize)> {
    check_window(am, window)?;
    let (lo, hi) = window;
    let n_w = hi - lo + 1;
    let n = am.n_rows() as f64;
    let sr = SHIFT_ROWS_IMAGE[byte_pos];

    // Centring constants per column.
    let mut mean = vec![0.0f64; n_w];
    for r in 0..am.n_rows() {
        let row = &am.row(r)[lo..=hi];
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    // u[v][col]: sum of centred x over class v; q[b][v][col]: the same over
    // traces whose ciphertext byte has bit b set. cnt/qc: counts.
    let mut u = vec![0.0f64; 256 * n_w];
    let mut q = vec![0.0f64; 8 * 256 * n_w];
    let mut ss = vec![0.0f64; n_w];
    let mut cnt = [0.0f64; 256];
    let mut qc = [[0.0f64; 256]; 8];
    // hypothesis sums need the full (c, v) joint distribution.
    let mut joint = vec![0u32; 256 * 256];
    for r in 0..am.n_rows() {
        let ct = &am.ciphertexts[r];
        let (c, v) = (ct[byte_pos], ct[sr] as usize);
        cnt[v] += 1.0;
        joint[v * 256 + c as usize] += 1;
        let row = &am.row(r)[lo..=hi];
        let urow = &mut u[v * n_w..(v + 1) * n_w];
        for k in 0..n_w {
            let x = row[k] as f64 - mean[k];
            urow[k] += x;
            ss[k] += x * x;
        }
        for b in 0..8 {
            if c >> b & 1 == 1 {
                qc[b][v] += 1.0;
                let qrow = &mut q[(b * 256 + v) * n_w..(b * 256 + v + 1) * n_w];
                for k in 0..n_w {
                    qrow[k] += row[k] as f64 - mean[k];
                }
            }
        }
    }

    // sum_i h_i x_i = sum_b sum_v [s_b = 0] q_b[v] + [s_b = 1] (u[v] - q_b[v])
    //              = sum_b sum_v q_b[v] + sum_b sum_v s_b(v ^ g) e_b[v]
    // with s = INV_SBOX and e_b = u - 2 q_b. The second term is an XOR
    // correlation over v, evaluated with Walsh-Hadamard transforms.
    let sbox_bits: Vec<[f64; 256]> = (0..8)
        .map(|b| {
            let mut t = [0.0f64; 256];
            for (w, slot) in t.iter_mut().enumerate() {
                *slot = (INV_SBOX[w] >> b & 1) as f64;
            }
            fwht(&mut t);
            t
        })
        .collect();
    let xor_corr = |e: &mut [f64; 256], b: usize| {
        fwht(e);
        for (x, s) in e.iter_mut().zip(&sbox_bits[b]) {
            *x *= s;
        }
        fwht(e);
        e.iter_mut().for_each(|x| *x /= 256.0);
    };

    let mut sxh = vec![[0.0f64; 256]; n_w];
    for k in 0..n_w {
        for b in 0..8 {
            let mut e = [0.0f64; 256];
            let mut base = 0.0;
            for v in 0..256 {
                let qv = q[(b * 256 + v) * n_w + k];
                base += qv;
                e[v] = u[v * n_w + k] - 2.0 * qv;
            }
            xor_corr(&mut e, b);
            for g in 0..256 {
                sxh[k][g] += base + e[g];
            }
        }
    }

    // sum of h over traces, same decomposition with x = 1.
    let mut sh = [0.0f64; 256];
    for b in 0..8 {
        let mut e = [0.0f64; 256];
        let mut base = 0.0;
        for v in 0..256 {
            base += qc[b][v];
            e[v] = cnt[v] - 2.0 * qc[b][v];
        }
        xor_corr(&mut e, b);
        for g in 0..256 {
            sh[g] += base + e[g];
        }
    }
    // sum of h^2 from the joint class counts.
    let mut shh = [0.0f64; 256];
    let occupied: Vec<(usize, u8, f64)> = joint
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(idx, &k)| (idx / 256, (idx % 256) as u8, k as f64))
        .collect();
    for (g, slot) in shh.iter_mut().enumerate() {
        *slot = occupied
            .iter()
            .map(|&(v, c, k)| {
                let h = hyp(c, v as u8, g as u8) as f64;
                k * h * h
            })
            .sum();
    }

    let mut scores = [0.0f64; 256];
    let mut undefined = 0;
    let mut cross = vec![0.0f64; n_w];
    for g in 0..256 {
        for k in 0..n_w {
            cross[k] = sxh[k][g];
        }
        let (best, flat) = best_abs(&cross, ss.iter().copied(), shh[g] - sh[g] * sh[g] / n);
        scores[g] = best;
        undefined += flat as usize;
    }
    Ok((scores, undefined))
}

/// In-place unnormalized fast Walsh-Hadamard transform.
fn fwht(a: &mut [f64; 256]) {
    let mut h = 1;
    while h < 256 {
        for i in (0..256).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
}

/// Window width above which the partitioned evaluation is used.
const PARTITION_MIN_COLUMNS: usize = 8;

/// Attacks all 16 bytes of the last round key over the window columns
/// `lo..=hi`. With `true_key` the rank of each true byte is recorded.
pub fn cpa_attack(
    am: &AlignedMatrix,
    window: (usize, usize),
    true_key: Option<&Block>,
) -> Result<CpaResult> {
    check_window(am, window)?;
    let truth = true_key.map(|k| expand_key(k)).transpose()?;
    let wide = window.1 - window.0 + 1 >= PARTITION_MIN_COLUMNS;
    let cols = if wide {
        Vec::new()
    } else {
        centred_columns(am, window.0, window.1)
    };
    let mut bytes = Vec::with_capacity(16);
    let mut round_key = [0u8; 16];
    for p in 0..16 {
        let (scores, undefined) = if wide {
            byte_scores_partitioned(am, p, window)?
        } else {
            scores_from_columns(am, p, &cols)
        };
        let t = truth.as_ref().map(|s| true_guess(s, p));
        let br = ByteResult::new(p, scores, undefined, t);
        round_key[SHIFT_ROWS_IMAGE[p]] = br.best_guess;
        bytes.push(br);
    }
    Ok(CpaResult {
        n_traces: am.n_rows(),
        window,
        bytes,
        recovered_round_key: round_key,
        recovered_key: invert_key_schedule(&round_key),
    })
}

/// True when every byte ranks its true guess first; stops at the first
/// byte that does not.
pub fn breaks_key(am: &AlignedMatrix, window: (usize, usize), true_key: &Block) -> Result<bool> {
    check_window(am, window)?;
    let schedule = expand_key(true_key)?;
    let wide = window.1 - window.0 + 1 >= PARTITION_MIN_COLUMNS;
    let cols = if wide {
        Vec::new()
    } else {
        centred_columns(am, window.0, window.1)
    };
    for p in 0..16 {
        let (scores, _) = if wide {
            byte_scores_partitioned(am, p, window)?
        } else {
            scores_from_columns(am, p, &cols)
        };
        if rank_of(&scores, true_guess(&schedule, p)) != 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y = [-1.0, -2.0, -3.0];
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        let z = [2.0, 4.0, 6.5];
        // statistics.correlation([1, 2, 3], [2, 4, 6.5]) in CPython
        assert!((pearson(&x, &z).unwrap() - 0.997_948_715_788_673_3).abs() < 1e-12);
        assert!(matches!(
            pearson(&x, &[1.0, 1.0, 1.0]),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(pearson(&x, &[1.0]).is_err());
    }

    #[test]
    fn rank_ties_count_against_truth() {
        let s = [0.0f64; 256];
        assert_eq!(rank_of(&s, 7), 256);
        let mut s = [0.0f64; 256];
        s[3] = 0.5;
        assert_eq!(rank_of(&s, 3), 1);
    }

    #[test]
    fn fwht_is_self_inverse_up_to_scale() {
        let mut a = [0.0f64; 256];
        for (i, v) in a.iter_mut().enumerate() {
            *v = (i * 7 % 13) as f64;
        }
        let orig = a;
        fwht(&mut a);
        fwht(&mut a);
        for (x, y) in a.iter().zip(&orig) {
            assert!((x / 256.0 - y).abs() < 1e-9);
        }
    }
}
