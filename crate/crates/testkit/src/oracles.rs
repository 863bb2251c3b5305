//! Independent reference computations. Nothing here calls into the
//! library's metric or uncertainty code; inputs are plain arrays.

/// A detection as raw data: corner box, class scores, row-major mask.
#[derive(Debug, Clone)]
pub struct RawDet {
    pub bbox: [f64; 4],
    pub scores: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Decodes column-major, background-first run lengths into a row-major
/// pixel vector.
pub fn decode_runs(h: usize, w: usize, runs: &[u32]) -> Vec<bool> {
    let mut col_major = Vec::with_capacity(h * w);
    for (i, &r) in runs.iter().enumerate() {
        col_major.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    assert_eq!(col_major.len(), h * w, "runs do not cover the grid");
    let mut out = vec![false; h * w];
    for c in 0..w {
        for r in 0..h {
            out[r * w + c] = col_major[c * h + r];
        }
    }
    out
}

pub fn bitmap_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn bitmap_dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

pub fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let area = |x: [f64; 4]| (x[2] - x[0]) * (x[3] - x[1]);
    inter / (area(a) + area(b) - inter)
}

fn plain_mean_box(boxes: &[[f64; 4]]) -> [f64; 4] {
    let n = boxes.len() as f64;
    let mut m = [0.0; 4];
    for b in boxes {
        for k in 0..4 {
            m[k] += b[k];
        }
    }
    m.map(|v| v / n)
}

/// Pixel-wise majority: kept when at least half the masks have it.
fn majority(masks: &[&Vec<bool>]) -> Vec<bool> {
    let n = masks.len();
    (0..masks[0].len())
        .map(|i| 2 * masks.iter().filter(|m| m[i]).count() >= n)
        .collect()
}

/// Class term for one detection: `1 - H(p) / H(uniform over m)`.
fn class_term(scores: &[f64], m: usize) -> f64 {
    let lifted: Vec<f64> = if scores.len() == 1 {
        vec![scores[0], 1.0 - scores[0]]
    } else {
        scores.to_vec()
    };
    assert_eq!(lifted.len(), m);
    let sum: f64 = lifted.iter().sum();
    let mut h = 0.0;
    for &s in &lifted {
        let p = s / sum;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    let mut h_max = 0.0;
    for _ in 0..m {
        let u = 1.0 / m as f64;
        h_max -= u * u.ln();
    }
    (1.0 - h / h_max).clamp(0.0, 1.0)
}

/// `(c_cls, c_box, c_mask, c)` for the members of one instance set, with
/// every average taken over all `t` passes.
pub fn coefficients(members: &[&RawDet], t: usize, m: usize) -> [f64; 4] {
    let t = t as f64;
    let c_cls = members.iter().map(|d| class_term(&d.scores, m)).sum::<f64>() / t;
    let boxes: Vec<[f64; 4]> = members.iter().map(|d| d.bbox).collect();
    let mean = plain_mean_box(&boxes);
    let c_box = boxes.iter().map(|b| box_iou(mean, *b)).sum::<f64>() / t;
    let masks: Vec<&Vec<bool>> = members.iter().map(|d| &d.mask).collect();
    let mean_mask = majority(&masks);
    let c_mask = masks.iter().map(|mk| bitmap_iou(&mean_mask, mk)).sum::<f64>() / t;
    [c_cls, c_box, c_mask, c_cls * c_box * c_mask]
}

fn max_score(d: &RawDet) -> f64 {
    d.scores.iter().cloned().fold(0.0, f64::max)
}

/// Greedy matching by the documented rule; returns `(pass, index)` lists.
pub fn match_sets(passes: &[Vec<RawDet>], threshold: f64) -> Vec<Vec<(usize, usize)>> {
    let mut sets: Vec<Vec<(usize, usize)>> = Vec::new();
    for (p, dets) in passes.iter().enumerate() {
        let mut order: Vec<usize> = (0..dets.len()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (&dets[i], &dets[j]);
            max_score(b)
                .partial_cmp(&max_score(a))
                .unwrap()
                .then(a.bbox[0].partial_cmp(&b.bbox[0]).unwrap())
                .then(a.bbox[1].partial_cmp(&b.bbox[1]).unwrap())
        });
        for i in order {
            let mut best: Option<(usize, f64)> = None;
            for (k, set) in sets.iter().enumerate() {
                if set.iter().any(|&(q, _)| q == p) {
                    continue;
                }
                let boxes: Vec<[f64; 4]> = set.iter().map(|&(q, j)| passes[q][j].bbox).collect();
                let iou = box_iou(plain_mean_box(&boxes), dets[i].bbox);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((k, iou));
                }
            }
            match best {
                Some((k, _)) => sets[k].push((p, i)),
                None => sets.push(vec![(p, i)]),
            }
        }
    }
    sets
}

/// True when every zero of the `n`×`n` keep-mask lies in some fully-zero
/// `b`×`b` square clipped to the grid.
pub fn zeros_are_clipped_blocks(keep: &[bool], n: usize, b: usize) -> bool {
    // prefix sums of dropped pixels
    let mut pre = vec![0usize; (n + 1) * (n + 1)];
    for r in 0..n {
        for c in 0..n {
            let z = usize::from(!keep[r * n + c]);
            pre[(r + 1) * (n + 1) + c + 1] =
                z + pre[r * (n + 1) + c + 1] + pre[(r + 1) * (n + 1) + c] - pre[r * (n + 1) + c];
        }
    }
    let zeros = |r0: usize, c0: usize, r1: usize, c1: usize| {
        pre[r1 * (n + 1) + c1] + pre[r0 * (n + 1) + c0]
            - pre[r0 * (n + 1) + c1]
            - pre[r1 * (n + 1) + c0]
    };
    let mut covered = vec![false; n * n];
    let b = b as isize;
    for top in (1 - b)..(n as isize) {
        for left in (1 - b)..(n as isize) {
            let r0 = top.max(0) as usize;
            let c0 = left.max(0) as usize;
            let r1 = ((top + b) as usize).min(n);
            let c1 = ((left + b) as usize).min(n);
            if zeros(r0, c0, r1, c1) == (r1 - r0) * (c1 - c0) {
                for r in r0..r1 {
                    for c in c0..c1 {
                        covered[r * n + c] = true;
                    }
                }
            }
        }
    }
    keep.iter().zip(&covered).all(|(k, c)| *k || *c)
}
