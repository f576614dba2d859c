//! Independent oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use frailwatch_core::bayes_net::{
    BayesNetModel, EnvState, FeatureModel, Gaussian, Standardization, MODEL_VERSION, N_ENV, N_LIGHT, N_OBJECT, N_TOD,
    N_WEATHER,
};
use frailwatch_core::model::{BBox, EnvContext, FrameMotionSummary, QuadrantStats, TimeOfDay, NUM_ACTIVITIES, NUM_OBJECTS};
use frailwatch_core::features::{FeatureVector, NUM_FEATURES};
use rand::Rng;

// ---------------------------------------------------------------------------
// Feature oracle
// ---------------------------------------------------------------------------

/// Random human box plus consistent per-quadrant movement.
fn random_frame<R: Rng>(rng: &mut R, t: f64, dt: f64, moving: bool) -> FrameMotionSummary {
    let present = rng.random::<f64>() > 0.03;
    let human = if present && rng.random::<f64>() > 0.02 {
        BBox::new(rng.random_range(0..50), rng.random_range(0..50), rng.random_range(20..200), rng.random_range(40..300))
    } else {
        BBox::EMPTY
    };
    let hpc = if present { human.area() / 2 + rng.random_range(0..10) } else { 0 };
    let mut frame = FrameMotionSummary::still(t, dt, human, hpc);
    frame.human_present = present;
    if !moving || human.is_empty() {
        return frame;
    }
    let mut total = 0u64;
    let mut bbox = BBox::EMPTY;
    let mut flow_sum = 0.0;
    for q in 0..4 {
        if rng.random::<f64>() < 0.3 {
            continue;
        }
        let qb = human.quadrant(q);
        if qb.is_empty() {
            continue;
        }
        let w = rng.random_range(1..=qb.w);
        let h = rng.random_range(1..=qb.h);
        let mb = BBox::new(qb.x + rng.random_range(0..=qb.w - w), qb.y + rng.random_range(0..=qb.h - h), w, h);
        let px = rng.random_range(1..=mb.area().min(hpc.max(4) / 4).max(1));
        let flow = rng.random_range(0.0..8.0);
        frame.quadrant_stats[q] = QuadrantStats { movement_pixel_count: px, movement_bbox: mb, mean_flow_magnitude: flow };
        total += px;
        flow_sum += flow * px as f64;
        bbox = union(&bbox, &mb);
    }
    if total == 0 {
        let qb = human.quadrant(1);
        let q = if qb.is_empty() { human } else { qb };
        let mb = BBox::new(q.x, q.y, 1, 1);
        frame.quadrant_stats[if qb.is_empty() { 0 } else { 1 }] =
            QuadrantStats { movement_pixel_count: 1, movement_bbox: mb, mean_flow_magnitude: 1.5 };
        total = 1;
        flow_sum = 1.5;
        bbox = mb;
    }
    frame.human_pixel_count = frame.human_pixel_count.max(total);
    frame.movement_pixel_count = total;
    frame.movement_bbox = bbox;
    frame.mean_flow_magnitude = flow_sum / total as f64;
    frame
}

/// A random frame stream mixing still runs of every length class with
/// movement bursts, starting at time `t0`.
pub fn random_stream<R: Rng>(rng: &mut R, t0: f64, target_seconds: f64) -> Vec<FrameMotionSummary> {
    let base_dt = [0.1, 0.2, 0.05][rng.random_range(0..3)];
    let mut frames = Vec::new();
    let mut t = t0;
    while t - t0 < target_seconds {
        let moving = rng.random::<f64>() < 0.5;
        let seconds = match rng.random_range(0..8) {
            0 => rng.random_range(0.05..1.0),
            1 => rng.random_range(1.0..2.0),
            2 => rng.random_range(2.0..5.0),
            3 => rng.random_range(5.0..10.0),
            4 => rng.random_range(10.0..30.0),
            5 => rng.random_range(30.0..60.0),
            6 => rng.random_range(60.0..120.0),
            _ => rng.random_range(0.1..0.5),
        };
        let mut run = 0.0;
        while run < seconds {
            let dt = if rng.random::<f64>() < 0.05 { base_dt * 2.0 } else { base_dt };
            frames.push(random_frame(rng, t, dt, moving));
            t += dt;
            run += dt;
        }
    }
    frames
}

pub fn random_env<R: Rng>(rng: &mut R) -> EnvContext {
    let mut objects = [0.0; NUM_OBJECTS];
    for o in objects.iter_mut() {
        *o = rng.random();
    }
    EnvContext {
        lighting_luma: rng.random_range(0.0..255.0),
        time_of_day: TimeOfDay::ALL[rng.random_range(0..3)],
        weather_suitable: rng.random(),
        object_likelihoods: objects,
    }
}

fn union(a: &BBox, b: &BBox) -> BBox {
    if a.w == 0 || a.h == 0 {
        return *b;
    }
    if b.w == 0 || b.h == 0 {
        return *a;
    }
    let x0 = a.x.min(b.x);
    let y0 = a.y.min(b.y);
    let x1 = (a.x + a.w).max(b.x + b.w);
    let y1 = (a.y + a.h).max(b.y + b.h);
    BBox::new(x0, y0, x1 - x0, y1 - y0)
}

fn area(b: &BBox) -> f64 {
    b.w as f64 * b.h as f64
}

/// dt-weighted mean over `(value, dt)` pairs; `None` when empty.
fn wmean(pairs: &[(f64, f64)]) -> Option<f64> {
    let w: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.is_empty() || w <= 0.0 {
        None
    } else {
        Some(pairs.iter().map(|p| p.0 * p.1).sum::<f64>() / w)
    }
}

fn wstd(pairs: &[(f64, f64)]) -> Option<f64> {
    let m = wmean(pairs)?;
    let m2 = wmean(&pairs.iter().map(|p| (p.0 * p.0, p.1)).collect::<Vec<_>>())?;
    Some((m2 - m * m).max(0.0).sqrt())
}

/// Quartile band means by integrating the weighted quantile function.
fn quartiles(pairs: &[(f64, f64)]) -> Option<[f64; 4]> {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.is_empty() || total <= 0.0 {
        return None;
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let lo = total * k as f64 / 4.0;
        let hi = if k == 3 { total } else { total * (k + 1) as f64 / 4.0 };
        let mut acc = 0.0f64;
        let mut cum = 0.0f64;
        for &(v, w) in &sorted {
            let a = cum.max(lo);
            let b = (cum + w).min(hi);
            if b > a {
                acc += v * (b - a);
            }
            cum += w;
        }
        *slot = acc / (total / 4.0);
    }
    Some(out)
}

/// Percent per bucket, first bucket open below, plus cumulative tails.
fn buckets(durations: &[f64]) -> [f64; 10] {
    let mut out = [0.0; 10];
    if durations.is_empty() {
        return out;
    }
    let n = durations.len() as f64;
    let eps = 1e-9;
    let lows = [f64::NEG_INFINITY, 2.0, 5.0, 10.0, 30.0, 60.0];
    let highs = [2.0, 5.0, 10.0, 30.0, 60.0, f64::INFINITY];
    for b in 0..6 {
        let c = durations.iter().filter(|&&d| d + eps >= lows[b] && d + eps < highs[b]).count();
        out[b] = 100.0 * c as f64 / n;
    }
    for (i, edge) in [2.0, 5.0, 10.0, 30.0].iter().enumerate() {
        let c = durations.iter().filter(|&&d| d + eps >= *edge).count();
        out[6 + i] = 100.0 * c as f64 / n;
    }
    out
}

/// Direct evaluation of every feature on the frames with timestamps in
/// `[t0, t1)`. Index k-1 holds `Fk`; F4 holds the first object likelihood.
/// `None` marks an undefined feature.
pub fn oracle_features(
    frames: &[FrameMotionSummary],
    env: &EnvContext,
    t0: f64,
    t1: f64,
    mirror: bool,
) -> Vec<Option<f64>> {
    let win: Vec<&FrameMotionSummary> = frames.iter().filter(|f| f.timestamp >= t0 && f.timestamp < t1).collect();
    let n = win.len();
    let mut f = vec![None; 66];
    f[0] = Some(env.lighting_luma);
    f[1] = Some(match env.time_of_day {
        TimeOfDay::T1 => 1.0,
        TimeOfDay::T2 => 2.0,
        TimeOfDay::T3 => 3.0,
    });
    f[2] = Some(if env.weather_suitable { 1.0 } else { 0.0 });
    f[3] = Some(env.object_likelihoods[0]);

    // Mark each frame inactive when its motionless run lasts ≥ 1 s.
    let mut inactive = vec![false; n];
    let mut i = 0;
    while i < n {
        if win[i].movement_pixel_count > 0 {
            i += 1;
            continue;
        }
        let mut j = i;
        let mut d = 0.0;
        while j < n && win[j].movement_pixel_count == 0 {
            d += win[j].dt;
            j += 1;
        }
        if d >= 1.0 - 1e-9 {
            for k in i..j {
                inactive[k] = true;
            }
        }
        i = j;
    }
    let mut inact_runs = Vec::new();
    let mut move_runs = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        let mut d = 0.0;
        while j < n && inactive[j] == inactive[i] {
            d += win[j].dt;
            j += 1;
        }
        if inactive[i] {
            inact_runs.push(d);
        } else {
            move_runs.push(d);
        }
        i = j;
    }
    let total: f64 = win.iter().map(|x| x.dt).sum();
    let inact: f64 = inact_runs.iter().sum();
    let mov: f64 = move_runs.iter().sum();
    f[4] = Some(total);
    f[5] = Some(100.0 * inact / total);
    f[6] = Some(inact_runs.len() as f64 * 60.0 / total);
    f[7] = Some(mov);
    f[8] = Some(100.0 * mov / total);

    let moving: Vec<usize> = (0..n).filter(|&k| !inactive[k]).collect();
    let every: Vec<usize> = (0..n).collect();
    let pick = |set: &[usize], g: &dyn Fn(&FrameMotionSummary) -> Option<f64>| -> Vec<(f64, f64)> {
        set.iter().filter_map(|&k| g(win[k]).map(|v| (v, win[k].dt))).collect()
    };
    let pixels = |x: &FrameMotionSummary| Some(x.movement_pixel_count as f64);
    let density = |x: &FrameMotionSummary| {
        (x.human_present && x.human_pixel_count > 0).then(|| 100.0 * x.movement_pixel_count as f64 / x.human_pixel_count as f64)
    };
    let scale = |x: &FrameMotionSummary| {
        (x.human_bbox.w > 0 && x.human_bbox.h > 0).then(|| 100.0 * area(&x.movement_bbox) / area(&x.human_bbox))
    };
    let speed = |x: &FrameMotionSummary| Some(x.mean_flow_magnitude);
    f[9] = wmean(&pick(&every, &pixels)).map(|v| v / 1e4);
    f[10] = wmean(&pick(&moving, &pixels)).map(|v| v / 1e4);
    f[11] = wmean(&pick(&every, &density));
    f[12] = wmean(&pick(&moving, &density));
    f[13] = wmean(&pick(&every, &scale));
    f[14] = wmean(&pick(&moving, &scale));
    f[15] = wmean(&pick(&every, &speed));
    f[16] = wmean(&pick(&moving, &speed));
    f[17] = wstd(&pick(&moving, &speed));
    f[18] = Some(win.iter().map(|x| x.mean_flow_magnitude * x.dt).sum::<f64>() * 300.0 / total);
    let qa = quartiles(&pick(&every, &speed));
    let qm = quartiles(&pick(&moving, &speed));
    for k in 0..4 {
        f[19 + k] = qa.map(|q| q[k]);
        f[23 + k] = qm.map(|q| q[k]);
    }
    f[27] = wstd(&pick(&every, &speed));

    // Top = quadrants {0,1}; image-right {0,2}; image-left {1,3}.
    let (right, left) = if mirror { ([1usize, 3], [0usize, 2]) } else { ([0, 2], [1, 3]) };
    let regions = [[0usize, 1], right, left];
    for (r, quads) in regions.iter().enumerate() {
        let q = *quads;
        let rspeed = move |x: &FrameMotionSummary| {
            let (a, b) = (&x.quadrant_stats[q[0]], &x.quadrant_stats[q[1]]);
            let px = (a.movement_pixel_count + b.movement_pixel_count) as f64;
            Some(if px > 0.0 {
                (a.movement_pixel_count as f64 * a.mean_flow_magnitude + b.movement_pixel_count as f64 * b.mean_flow_magnitude) / px
            } else {
                0.0
            })
        };
        let rscale = move |x: &FrameMotionSummary| {
            (x.human_bbox.w > 0 && x.human_bbox.h > 0).then(|| {
                let u = union(&x.quadrant_stats[q[0]].movement_bbox, &x.quadrant_stats[q[1]].movement_bbox);
                (100.0 * area(&u) / (area(&x.human_bbox) / 2.0)).min(100.0)
            })
        };
        let rdensity = move |x: &FrameMotionSummary| {
            (x.human_present && x.human_pixel_count > 0).then(|| {
                let px = (x.quadrant_stats[q[0]].movement_pixel_count + x.quadrant_stats[q[1]].movement_pixel_count) as f64;
                (100.0 * px / (x.human_pixel_count as f64 / 2.0)).min(100.0)
            })
        };
        f[28 + r] = wmean(&pick(&moving, &rspeed));
        f[31 + r] = wmean(&pick(&moving, &rscale));
        f[34 + r] = wmean(&pick(&moving, &rdensity));
        f[37 + r] = wmean(&pick(&every, &rspeed));
        f[40 + r] = wmean(&pick(&every, &rscale));
        f[43 + r] = wmean(&pick(&every, &rdensity));
    }
    let bi = buckets(&inact_runs);
    let bm = buckets(&move_runs);
    for b in 0..10 {
        f[46 + b] = Some(bi[b]);
        f[56 + b] = Some(bm[b]);
    }
    f
}

/// First disagreement between an extracted row and the oracle, if any.
pub fn feature_mismatch(fv: &FeatureVector, oracle: &[Option<f64>], tol: f64) -> Option<String> {
    for k in 1..=NUM_FEATURES {
        let got = fv.get(k);
        match oracle[k - 1] {
            Some(want) if fv.is_undefined(k) => return Some(format!("F{k}: undefined, oracle {want}")),
            Some(want) if (got - want).abs() > tol * want.abs().max(1.0) => {
                return Some(format!("F{k}: got {got}, oracle {want}"))
            }
            None if !fv.is_undefined(k) || got != 0.0 => return Some(format!("F{k}: got {got}, oracle undefined")),
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Bayesian network oracle
// ---------------------------------------------------------------------------

fn random_simplex<R: Rng, const K: usize>(rng: &mut R) -> [f64; K] {
    let mut p = [0.0; K];
    for x in p.iter_mut() {
        *x = rng.random_range(0.02..1.0);
    }
    let s: f64 = p.iter().sum();
    p.map(|x| x / s)
}

/// A random model over the given feature columns (none for a discrete-only
/// network).
pub fn random_model<R: Rng>(rng: &mut R, columns: &[usize]) -> BayesNetModel {
    let features = columns
        .iter()
        .map(|&column| {
            let mut cells = [[Gaussian::STANDARD; 2]; NUM_ACTIVITIES];
            for row in cells.iter_mut() {
                for g in row.iter_mut() {
                    *g = Gaussian { mean: rng.random_range(-2.0..2.0), var: rng.random_range(0.2..3.0) };
                }
            }
            FeatureModel {
                column,
                standardization: Standardization { mean: rng.random_range(-5.0..5.0), std: rng.random_range(0.5..4.0) },
                cells,
            }
        })
        .collect();
    BayesNetModel {
        version: MODEL_VERSION,
        prior_h: random_simplex::<_, 2>(rng),
        prior_tod: random_simplex::<_, N_TOD>(rng),
        prior_weather: random_simplex::<_, N_WEATHER>(rng),
        prior_light: random_simplex::<_, N_LIGHT>(rng),
        prior_object: random_simplex::<_, N_OBJECT>(rng),
        lighting_cuts: [80.0, 160.0],
        cpt_a: (0..2 * N_ENV).map(|_| random_simplex::<_, NUM_ACTIVITIES>(rng)).collect(),
        features,
    }
}

/// Gaussian density of raw value `x` in a feature cell, evaluated directly.
fn cell_density(f: &FeatureModel, a: usize, h: usize, x: f64) -> f64 {
    let g = f.cells[a][h];
    let s = f.standardization;
    let z = (x - s.mean) / s.std;
    (-(z - g.mean).powi(2) / (2.0 * g.var)).exp() / (2.0 * std::f64::consts::PI * g.var).sqrt() / s.std
}

/// The full joint table P(H, A, E, F=row) over every (h, a, env) triple.
pub fn joint_table(model: &BayesNetModel, row: &[f64]) -> Vec<(usize, usize, EnvState, f64)> {
    let mut out = Vec::with_capacity(2 * NUM_ACTIVITIES * N_ENV);
    for h in 0..2 {
        for tod in 0..N_TOD {
            for weather in 0..N_WEATHER {
                for light in 0..N_LIGHT {
                    for object in 0..N_OBJECT {
                        let e = EnvState { tod, weather, light, object };
                        let cpt = &model.cpt_a[h * N_ENV + e.index()];
                        for a in 0..NUM_ACTIVITIES {
                            let mut p = model.prior_h[h]
                                * model.prior_tod[tod]
                                * model.prior_weather[weather]
                                * model.prior_light[light]
                                * model.prior_object[object]
                                * cpt[a];
                            for f in &model.features {
                                p *= cell_density(f, a, h, row[f.column]);
                            }
                            out.push((h, a, e, p));
                        }
                    }
                }
            }
        }
    }
    out
}

/// P(H | E=e, A=a) (or A summed out when `a` is `None`) by filtering the
/// joint table.
pub fn brute_posterior_health(model: &BayesNetModel, e: &EnvState, a: Option<usize>, row: &[f64]) -> [f64; 2] {
    let mut mass = [0.0; 2];
    for (h, aa, ee, p) in joint_table(model, row) {
        if ee == *e && a.is_none_or(|x| x == aa) {
            mass[h] += p;
        }
    }
    let s = mass[0] + mass[1];
    [mass[0] / s, mass[1] / s]
}

/// P(A, H | E=e) by filtering the joint table, indexed `[a][h]`.
pub fn brute_posterior_joint(model: &BayesNetModel, e: &EnvState, row: &[f64]) -> [[f64; 2]; NUM_ACTIVITIES] {
    let mut mass = [[0.0; 2]; NUM_ACTIVITIES];
    for (h, a, ee, p) in joint_table(model, row) {
        if ee == *e {
            mass[a][h] += p;
        }
    }
    let s: f64 = mass.iter().flatten().sum();
    mass.map(|r| r.map(|x| x / s))
}

pub fn random_env_state<R: Rng>(rng: &mut R) -> EnvState {
    EnvState {
        tod: rng.random_range(0..N_TOD),
        weather: rng.random_range(0..N_WEATHER),
        light: rng.random_range(0..N_LIGHT),
        object: rng.random_range(0..N_OBJECT),
    }
}
