//! Naive reference implementations used as test oracles. Each one is written
//! straight from the textbook definition with plain loops, sharing no code
//! with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

pub type Col = Vec<Option<f64>>;

fn window(x: &[f64], t: usize, n: usize) -> Option<&[f64]> {
    if t + 1 < n {
        None
    } else {
        Some(&x[t + 1 - n..=t])
    }
}

fn highest(w: &[f64]) -> f64 {
    let mut m = w[0];
    for &v in w {
        if v > m {
            m = v;
        }
    }
    m
}

fn lowest(w: &[f64]) -> f64 {
    let mut m = w[0];
    for &v in w {
        if v < m {
            m = v;
        }
    }
    m
}

fn mean(w: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in w {
        s += v;
    }
    s / w.len() as f64
}

pub fn sma(x: &[f64], n: usize) -> Col {
    (0..x.len()).map(|t| window(x, t, n).map(mean)).collect()
}

/// `e[t] = a x[t] + (1 - a) e[t-1]`, seeded with the plain mean of the first
/// `n` defined values.
pub fn ema(x: &Col, n: usize) -> Col {
    let a = 2.0 / (n as f64 + 1.0);
    let mut out = vec![None; x.len()];
    let Some(start) = x.iter().position(Option::is_some) else {
        return out;
    };
    if x.len() < start + n {
        return out;
    }
    let mut seed = 0.0;
    for v in &x[start..start + n] {
        seed += v.unwrap();
    }
    let mut e = seed / n as f64;
    out[start + n - 1] = Some(e);
    for t in start + n..x.len() {
        e = a * x[t].unwrap() + (1.0 - a) * e;
        out[t] = Some(e);
    }
    out
}

pub fn defined(x: &[f64]) -> Col {
    x.iter().map(|&v| Some(v)).collect()
}

/// Lower, middle, upper, width, percent.
pub fn bollinger(c: &[f64], n: usize, k: f64) -> [Col; 5] {
    let mut out: [Col; 5] = std::array::from_fn(|_| vec![None; c.len()]);
    for t in 0..c.len() {
        let Some(w) = window(c, t, n) else { continue };
        // a constant window has exactly zero spread; summation noise must not
        // invent one
        let flat = highest(w) == lowest(w);
        let m = if flat { w[0] } else { mean(w) };
        let mut ss = 0.0;
        for &v in w {
            ss += (v - m).powi(2);
        }
        let sd = (ss / n as f64).sqrt();
        let (lo, hi) = (m - k * sd, m + k * sd);
        out[0][t] = Some(lo);
        out[1][t] = Some(m);
        out[2][t] = Some(hi);
        out[3][t] = Some((hi - lo) / m);
        out[4][t] = if hi > lo { Some((c[t] - lo) / (hi - lo)) } else { None };
    }
    out
}

fn donchian_mid(h: &[f64], l: &[f64], t: usize, n: usize) -> Option<f64> {
    Some((highest(window(h, t, n)?) + lowest(window(l, t, n)?)) / 2.0)
}

/// Conversion, base, span A, span B (spans displaced `p / 2` forward) and the
/// lagging span.
pub fn ichimoku(h: &[f64], l: &[f64], c: &[f64], n: usize, m: usize, p: usize) -> [Col; 5] {
    let len = c.len();
    let d = p / 2;
    let mut out: [Col; 5] = std::array::from_fn(|_| vec![None; len]);
    for t in 0..len {
        out[0][t] = donchian_mid(h, l, t, n);
        out[1][t] = donchian_mid(h, l, t, m);
        if t >= d {
            let s = t - d;
            out[2][t] = match (donchian_mid(h, l, s, n), donchian_mid(h, l, s, m)) {
                (Some(a), Some(b)) => Some((a + b) / 2.0),
                _ => None,
            };
            out[3][t] = donchian_mid(h, l, s, p);
        }
        out[4][t] = c.get(t + m).copied();
    }
    out
}

pub fn rsi(c: &[f64], n: usize) -> Col {
    (0..c.len())
        .map(|t| {
            if t < n {
                return None;
            }
            let mut ups = Vec::new();
            let mut downs = Vec::new();
            for i in t + 1 - n..=t {
                let d = c[i] - c[i - 1];
                ups.push(d.max(0.0));
                downs.push((-d).max(0.0));
            }
            let (g, lo) = (mean(&ups), mean(&downs));
            Some(match (g == 0.0, lo == 0.0) {
                (true, true) => 50.0,
                (_, true) => 100.0,
                _ => 100.0 * g / (g + lo),
            })
        })
        .collect()
}

/// Line, histogram, signal.
pub fn macd(c: &[f64], n: usize, m: usize, p: usize) -> [Col; 3] {
    let x = defined(c);
    let fast = ema(&x, n);
    let slow = ema(&x, m);
    let line: Col = fast
        .iter()
        .zip(&slow)
        .map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    let signal = ema(&line, p);
    let hist = line
        .iter()
        .zip(&signal)
        .map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    [line, hist, signal]
}

/// Wilder-smoothed DX of the raw directional movements.
pub fn adx(h: &[f64], l: &[f64], n: usize) -> Col {
    let len = h.len();
    let mut out = vec![None; len];
    if len <= n {
        return out;
    }
    let dx = |t: usize| {
        let up = h[t] - h[t - 1];
        let down = l[t - 1] - l[t];
        if up + down == 0.0 {
            0.0
        } else {
            ((up - down) / (up + down)).abs()
        }
    };
    let mut s = 0.0;
    for t in 1..=n {
        s += dx(t);
    }
    let mut a = s / n as f64;
    out[n] = Some(a);
    for t in n + 1..len {
        a += (dx(t) - a) / n as f64;
        out[t] = Some(a);
    }
    out
}

pub fn williams_r(h: &[f64], l: &[f64], c: &[f64], n: usize) -> Col {
    (0..c.len())
        .map(|t| {
            let hh = highest(window(h, t, n)?);
            let ll = lowest(window(l, t, n)?);
            (hh > ll).then(|| 100.0 * (hh - c[t]) / (hh - ll))
        })
        .collect()
}

pub fn atr(h: &[f64], l: &[f64], c: &[f64], n: usize) -> Col {
    let tr: Vec<f64> = (0..c.len())
        .map(|t| {
            if t == 0 {
                h[0] - l[0]
            } else {
                let cands = [h[t] - l[t], (h[t] - c[t - 1]).abs(), (l[t] - c[t - 1]).abs()];
                highest(&cands)
            }
        })
        .collect();
    sma(&tr, n)
}

pub fn kdj(h: &[f64], l: &[f64], c: &[f64], kw: usize, ds: usize) -> [Col; 3] {
    let k: Col = (0..c.len())
        .map(|t| {
            let hh = highest(window(h, t, kw)?);
            let ll = lowest(window(l, t, kw)?);
            (hh > ll).then(|| 100.0 * (c[t] - ll) / (hh - ll))
        })
        .collect();
    let d: Col = (0..c.len())
        .map(|t| {
            if t + 1 < ds {
                return None;
            }
            let vals: Option<Vec<f64>> = k[t + 1 - ds..=t].iter().copied().collect();
            Some(mean(&vals?))
        })
        .collect();
    let j = (0..c.len())
        .map(|t| Some(3.0 * k[t]? - 2.0 * d[t]?))
        .collect();
    [k, d, j]
}

pub fn squeeze(c: &[f64], n: usize, m: usize, p: usize, q: f64) -> Col {
    let (a, b, base) = (sma(c, n), sma(c, m), sma(c, p));
    (0..c.len())
        .map(|t| Some((a[t]? - b[t]?) / (q * base[t]?)))
        .collect()
}

/// Every indicator sub-column under its conventional name, for the standard
/// parameter set.
pub fn all_indicators(h: &[f64], l: &[f64], c: &[f64]) -> BTreeMap<String, Col> {
    let mut m = BTreeMap::new();
    for n in [20, 55] {
        m.insert(format!("SMA_{n}"), sma(c, n));
    }
    for n in [20, 55, 200] {
        m.insert(format!("EMA_{n}"), ema(&defined(c), n));
    }
    for (name, col) in ["BBL", "BBM", "BBU", "BBB", "BBP"].iter().zip(bollinger(c, 20, 2.0)) {
        m.insert(format!("{name}_20_2"), col);
    }
    let ich = ichimoku(h, l, c, 9, 26, 52);
    for (name, col) in ["ITS_9", "IKS_26", "ISA_52", "ISB_52", "CS_26"].iter().zip(ich) {
        m.insert(name.to_string(), col);
    }
    for n in [6, 12, 14, 24] {
        m.insert(format!("RSI_{n}"), rsi(c, n));
    }
    for (name, col) in ["MACD", "MACDh", "MACDs"].iter().zip(macd(c, 12, 26, 9)) {
        m.insert(format!("{name}_12_26_9"), col);
    }
    m.insert("ADX_14".into(), adx(h, l, 14));
    m.insert("WILLR_14".into(), williams_r(h, l, c, 14));
    m.insert("ATR_14".into(), atr(h, l, c, 14));
    for (name, col) in ["K", "D", "J"].iter().zip(kdj(h, l, c, 14, 3)) {
        m.insert(format!("{name}_14_3"), col);
    }
    m.insert("SQZ_20_50_200_2".into(), squeeze(c, 20, 50, 200, 2.0));
    m
}

/// Largest absolute difference between two columns; `None` when their
/// defined regions differ.
pub fn max_abs_diff(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        match (x, y) {
            (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
            (None, None) => {}
            _ => return None,
        }
    }
    Some(worst)
}

/// Forward scan over the next `h` closes.
pub fn directional_index(c: &[f64], n: usize, h: usize) -> Option<f64> {
    if n + h >= c.len() {
        return None;
    }
    let p = c[n];
    let (mut hi, mut lo) = (c[n + 1], c[n + 1]);
    for k in 1..=h {
        hi = hi.max(c[n + k]);
        lo = lo.min(c[n + k]);
    }
    Some((hi - p) / 2.0 + (lo - p) / 2.0 + (c[n + h] - p) / 2.0)
}

/// Pairwise Mann–Whitney AUC over every (positive, negative) pair.
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// `(tp, fp, tn, fn)` with `score >= threshold` predicted positive.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> (usize, usize, usize, usize) {
    let tp = (0..scores.len()).filter(|&i| scores[i] >= threshold && labels[i] == 1).count();
    let fp = (0..scores.len()).filter(|&i| scores[i] >= threshold && labels[i] == 0).count();
    let tn = (0..scores.len()).filter(|&i| scores[i] < threshold && labels[i] == 0).count();
    let fn_ = (0..scores.len()).filter(|&i| scores[i] < threshold && labels[i] == 1).count();
    (tp, fp, tn, fn_)
}

/// Lift per bucket of the descending score order, ties broken by position.
pub fn lift(scores: &[f64], labels: &[u8], buckets: usize) -> Vec<f64> {
    let n = scores.len();
    // selection-sort style ranking: rank = #strictly higher + #equal earlier
    let mut order = vec![0usize; n];
    for i in 0..n {
        let rank = (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count();
        order[rank] = i;
    }
    let overall = labels.iter().filter(|&&y| y == 1).count() as f64 / n as f64;
    (0..buckets)
        .map(|k| {
            let (a, b) = (k * n / buckets, (k + 1) * n / buckets);
            let pos = (a..b).filter(|&r| labels[order[r]] == 1).count() as f64;
            pos / (b - a) as f64 / overall
        })
        .collect()
}

/// A simulated trade: `(is_long, entry, exit, net_return)`.
pub type SimTrade = (bool, usize, usize, f64);

fn net(long: bool, entry: f64, exit: f64, cost_per_price: f64) -> f64 {
    let gross = if long { exit / entry - 1.0 } else { 1.0 - exit / entry };
    gross - cost_per_price / entry
}

/// Every qualifying day opens a trade closed exactly `horizon` days later.
pub fn fixed_sim(w: &[f64], c: &[f64], long_t: f64, short_t: f64, horizon: usize, cost: f64) -> Vec<SimTrade> {
    let mut out = Vec::new();
    for i in 0..w.len() {
        if i + horizon >= c.len() {
            continue;
        }
        if w[i] >= long_t {
            out.push((true, i, i + horizon, net(true, c[i], c[i + horizon], cost)));
        }
        if w[i] <= short_t {
            out.push((false, i, i + horizon, net(false, c[i], c[i + horizon], cost)));
        }
    }
    out
}

/// Holds while the entry condition persists: a run of qualifying days
/// `[s, e)` becomes one trade from `s` to `e`, or to the last day when the
/// run reaches it. A run starting on the last day opens nothing.
pub fn dynamic_sim(w: &[f64], c: &[f64], long_t: f64, short_t: f64, cost: f64) -> Vec<SimTrade> {
    let last = c.len() - 1;
    let mut out = Vec::new();
    for long in [true, false] {
        let on = |i: usize| if long { w[i] >= long_t } else { w[i] <= short_t };
        let mut s = 0;
        while s < last {
            if !on(s) {
                s += 1;
                continue;
            }
            let mut e = s;
            while e < last && on(e) {
                e += 1;
            }
            out.push((long, s, e, net(long, c[s], c[e], cost)));
            s = e;
        }
    }
    out
}

/// `(winners, losers, total)` for one side.
pub fn tally(trades: &[SimTrade], long: bool) -> (usize, usize, f64) {
    let mut r = (0, 0, 0.0);
    for t in trades.iter().filter(|t| t.0 == long) {
        if t.3 > 0.0 {
            r.0 += 1;
        } else {
            r.1 += 1;
        }
        r.2 += t.3;
    }
    r
}

/// Direct min-max rescaling.
pub fn min_max(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    x.iter().map(|v| (v - lo) / (hi - lo)).collect()
}
