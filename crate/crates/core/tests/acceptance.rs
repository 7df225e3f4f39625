//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use fusionbed::bus::{decode, encode, BusFrame, Delivery, Link, LinkParams, MsgType, NetworkModel, WireError};
use fusionbed::collab::{ci_fuse, ci_omega};
use fusionbed::fusion::assign::assign;
use fusionbed::fusion::{Detection3D, DetectionSource};
use fusionbed::geometry::{min_eigenvalue, vec3, Vec3};
use fusionbed::metrics::{clear_mot, match_frame, mota_from_counts, ospa, FrameMatchResult};
use fusionbed::offload::{in_order_oracle, CLASS_LOCAL};
use fusionbed::scenario::{bundled, load_scenario, run_scenario, Mode, RunOptions, RunOutput, Scenario};
use fusionbed::tracker::{predict, update, Track, TrackerConfig, TrackerState};

const DETERMINISM_BUDGET: Duration = Duration::from_secs(10);
const ASSIGN_BUDGET: Duration = Duration::from_secs(5);
const COLLAB_BUDGET: Duration = Duration::from_secs(30);
const ASSIGN_TRIALS: usize = 1000;
const NEES_RUNS: usize = 200;
const NEES_STEPS: usize = 50;
const NEES_CONFIDENCE: f64 = 0.95;
const PSD_FLOOR: f64 = -1e-9;
const CI_TRIALS: usize = 1000;
const CI_TRACE_SLACK: f64 = 1e-9;
const CI_GRID_STEP: f64 = 1e-3;
const CI_OMEGA_TOL: f64 = 2e-3;
const RECALL_GAIN: f64 = 0.2;
const BASELINE_TOL: f64 = 1e-9;
const FUZZ_FRAMES: usize = 10_000;
const OSPA_TRIALS: usize = 100;
const NET_SENDS: usize = 10_000;
const DROP_PROB: f64 = 0.1;
const DROP_TOL: f64 = 0.01;
const LATENCY_REL_TOL: f64 = 0.02;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn run_mode(s: &Scenario, mode: Mode, keep_states: bool) -> Result<RunOutput, String> {
    let s = s.clone().with_overrides(Some(mode), None).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        keep_states,
        ..RunOptions::default()
    };
    run_scenario(&s, opts).map_err(|e| e.to_string())
}

// 1
fn determinism() -> Verdict {
    let s = load_scenario(bundled("urban").unwrap()).map_err(|e| e.to_string())?;
    ensure(s.duration == 30.0 && s.objects.len() == 5 && s.seed == 42, || "urban is not 30 s / 5 objects / seed 42".into())?;
    let mut outs = Vec::new();
    let mut slowest = Duration::ZERO;
    for _ in 0..2 {
        let t0 = Instant::now();
        outs.push(run_scenario(&s, RunOptions::default()).map_err(|e| e.to_string())?);
        slowest = slowest.max(t0.elapsed());
    }
    let (a, b) = (&outs[0].report, &outs[1].report);
    ensure(a.to_json() == b.to_json(), || "report JSON differs".into())?;
    ensure(a.tracks_jsonl() == b.tracks_jsonl(), || "track JSONL differs".into())?;
    ensure(slowest < DETERMINISM_BUDGET, || format!("run took {slowest:?}"))?;
    Ok(format!(
        "report {} bytes and tracks {} bytes identical; slowest run {:.2} s",
        a.to_json().len(),
        a.tracks_jsonl().len(),
        slowest.as_secs_f64()
    ))
}

fn brute_force_min(cost: &DMatrix<f64>) -> f64 {
    let (n, m) = cost.shape();
    let c = if n <= m { cost.clone() } else { cost.transpose() };
    let (n, m) = c.shape();
    fn rec(c: &DMatrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == c.nrows() {
            *best = best.min(acc);
            return;
        }
        for j in 0..c.ncols() {
            if !used[j] {
                used[j] = true;
                rec(c, row + 1, used, acc + c[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(&c, 0, &mut vec![false; m], 0.0, &mut best);
    let _ = n;
    best
}

// 2
fn assignment_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut r = rng(2);
    for trial in 0..ASSIGN_TRIALS {
        let (n, m) = (r.random_range(1..=6), r.random_range(1..=6));
        // integer costs make totals exact regardless of summation order
        let integer = trial % 2 == 0;
        let cost = DMatrix::from_fn(n, m, |_, _| {
            if integer {
                r.random_range(0..20) as f64
            } else {
                r.random_range(0..1_000_000) as f64 / 64.0
            }
        });
        let pairs = assign(&cost);
        ensure(pairs.len() == n.min(m), || format!("trial {trial}: {} pairs for {n}x{m}", pairs.len()))?;
        let mut rows: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        ensure(rows.len() == pairs.len() && cols.len() == pairs.len(), || format!("trial {trial}: index reused"))?;
        let total: f64 = pairs.iter().map(|&(i, j)| cost[(i, j)]).sum();
        let best = brute_force_min(&cost);
        ensure(total == best, || format!("trial {trial}: hungarian {total} vs brute force {best}"))?;
    }
    let el = t0.elapsed();
    ensure(el < ASSIGN_BUDGET, || format!("took {el:?}"))?;
    Ok(format!("{ASSIGN_TRIALS} matrices up to 6x6 exact; {:.2} s", el.as_secs_f64()))
}

fn chol_sample(l: &Matrix3<f64>, r: &mut ChaCha8Rng) -> Vec3 {
    l * vec3(normal(r), normal(r), normal(r))
}

// 3
fn filter_consistency() -> Verdict {
    let cfg = TrackerConfig::default();
    let (dt, q) = (0.1, cfg.q);
    let meas_cov = Matrix3::new(0.25, 0.05, 0.0, 0.05, 0.16, 0.02, 0.0, 0.02, 0.09);
    let l = meas_cov.cholesky().ok_or("measurement covariance not SPD")?.l();
    let mut r = rng(3);
    let mut nees_sum = 0.0;
    let mut count = 0usize;
    let mut min_eig = f64::INFINITY;
    for run in 0..NEES_RUNS {
        let mut p = vec3(normal(&mut r), normal(&mut r), normal(&mut r)) * 10.0;
        let mut v = vec3(normal(&mut r), normal(&mut r), normal(&mut r)) * cfg.init_velocity_sigma;
        let mut track: Option<Track> = None;
        for k in 0..NEES_STEPS {
            let t = k as f64 * dt;
            if k > 0 {
                // piecewise-constant acceleration with variance q: matches Q(dt, q)
                for ax in 0..3 {
                    let a = normal(&mut r) * q.sqrt();
                    p[ax] += v[ax] * dt + 0.5 * a * dt * dt;
                    v[ax] += a * dt;
                }
            }
            let det = Detection3D {
                position: p + chol_sample(&l, &mut r),
                radial_speed: 0.0,
                cov: meas_cov,
                source: DetectionSource::CameraRadar,
                score: 1.0,
                timestamp: t,
            };
            let tr = match track.take() {
                None => Track::new(run as u64, &det, &cfg),
                Some(prev) => update(&predict(&prev, dt, q), &det).map_err(|e| e.to_string())?,
            };
            min_eig = min_eig.min(min_eigenvalue(&tr.cov));
            let e = tr.position() - p;
            let pc = tr.position_cov().try_inverse().ok_or("singular position covariance")?;
            nees_sum += (e.transpose() * pc * e)[(0, 0)];
            count += 1;
            track = Some(tr);
        }
    }
    let dof = 3.0 * count as f64;
    let chi = ChiSquared::new(dof).map_err(|e| e.to_string())?;
    let alpha = 1.0 - NEES_CONFIDENCE;
    let (lo, hi) = (chi.inverse_cdf(alpha / 2.0) / count as f64, chi.inverse_cdf(1.0 - alpha / 2.0) / count as f64);
    let anees = nees_sum / count as f64;
    ensure(min_eig > PSD_FLOOR, || format!("min eigenvalue {min_eig:e}"))?;
    ensure(anees >= lo && anees <= hi, || format!("average NEES {anees:.4} outside [{lo:.4}, {hi:.4}]"))?;
    Ok(format!("average NEES {anees:.4} in [{lo:.4}, {hi:.4}] over {count} samples; min eig {min_eig:.3e}"))
}

fn random_spd(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(r));
    let scale = 10f64.powf(r.random_range(-1.0..1.0));
    (&a * a.transpose() + DMatrix::identity(n, n) * 0.05) * scale
}

fn ci_objective(pa: &DMatrix<f64>, pb: &DMatrix<f64>, w: f64) -> f64 {
    let ia = pa.clone().try_inverse().unwrap();
    let ib = pb.clone().try_inverse().unwrap();
    (ia * w + ib * (1.0 - w)).try_inverse().unwrap().trace()
}

// 4
fn ci_correctness() -> Verdict {
    let mut r = rng(4);
    let mut worst_gap: f64 = 0.0;
    for trial in 0..CI_TRIALS {
        let n = [2, 3, 6][trial % 3];
        let (pa, pb) = (random_spd(&mut r, n), random_spd(&mut r, n));
        let w = ci_omega(&pa, &pb).map_err(|e| e.to_string())?;
        let xa = DVector::from_fn(n, |_, _| normal(&mut r));
        let xb = DVector::from_fn(n, |_, _| normal(&mut r));
        let (_, p) = ci_fuse(&xa, &pa, &xb, &pb, w).map_err(|e| e.to_string())?;
        let bound = pa.trace().min(pb.trace());
        ensure(p.trace() <= bound + CI_TRACE_SLACK, || format!("trial {trial}: trace {} > {bound}", p.trace()))?;
        let steps = (1.0 / CI_GRID_STEP).round() as usize;
        let (grid_w, _) = (0..=steps)
            .map(|k| k as f64 * CI_GRID_STEP)
            .map(|g| (g, ci_objective(&pa, &pb, g)))
            .fold((0.0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        worst_gap = worst_gap.max((w - grid_w).abs());
        ensure((w - grid_w).abs() <= CI_OMEGA_TOL, || format!("trial {trial}: omega {w} vs grid {grid_w}"))?;
    }
    let scalar = |a: f64, b: f64| ci_omega(&DMatrix::from_element(1, 1, a), &DMatrix::from_element(1, 1, b));
    let (w14, w41) = (scalar(1.0, 4.0).map_err(|e| e.to_string())?, scalar(4.0, 1.0).map_err(|e| e.to_string())?);
    ensure(w14 == 1.0 && w41 == 0.0, || format!("scalar cases gave {w14} and {w41}"))?;
    Ok(format!("{CI_TRIALS} pairs; max |omega - grid| {worst_gap:.2e}; scalar (1,4)->1, (4,1)->0"))
}

// 5
fn collaborative_benefit() -> Verdict {
    let t0 = Instant::now();
    let s = load_scenario(bundled("occlusion").unwrap()).map_err(|e| e.to_string())?;
    let cr = run_mode(&s, Mode::Cr, false)?.report.metrics;
    let covi = run_mode(&s, Mode::CrCovi, false)?.report.metrics;
    let el = t0.elapsed();
    let (rc, rv) = (cr.recall.ok_or("cr recall undefined")?, covi.recall.ok_or("cr-covi recall undefined")?);
    let (mc, mv) = (cr.mota.ok_or("cr mota undefined")?, covi.mota.ok_or("cr-covi mota undefined")?);
    ensure(rv >= rc + RECALL_GAIN, || format!("recall cr {rc:.4} cr-covi {rv:.4}"))?;
    ensure(mv >= mc, || format!("mota cr {mc:.4} cr-covi {mv:.4}"))?;
    ensure(el < COLLAB_BUDGET, || format!("took {el:?}"))?;
    let baseline: serde_json::Value =
        serde_json::from_str(include_str!("../testdata/occlusion_baseline.json")).map_err(|e| e.to_string())?;
    for (mode, recall, mota) in [("cr", rc, mc), ("cr-covi", rv, mv)] {
        let b = &baseline["modes"][mode];
        let (br, bm) = (b["recall"].as_f64().unwrap(), b["mota"].as_f64().unwrap());
        ensure((recall - br).abs() <= BASELINE_TOL && (mota - bm).abs() <= BASELINE_TOL, || {
            format!("{mode} drifted from baseline: recall {recall} vs {br}, mota {mota} vs {bm}")
        })?;
    }
    Ok(format!(
        "recall {rc:.4} -> {rv:.4}, mota {mc:.4} -> {mv:.4}; matches frozen baseline; {:.2} s",
        el.as_secs_f64()
    ))
}

fn dist_scenario(latency: f64, timeout: f64) -> Result<Scenario, String> {
    let text = format!(
        r#"{{
  "version": 1, "name": "dist-exactness", "duration": 12, "seed": 66,
  "agents": [
    {{"id": "ego", "kind": "ego", "motion": {{"type": "constant-velocity", "p0": [0, 0, 0], "v": [3, 0, 0]}},
      "sensors": [{{"type": "camera", "preset": "blackfly-s", "mount": {{"position": [1.5, 0, 1.5]}}}},
                  {{"type": "radar", "preset": "iwr1443", "mount": {{"position": [2, 0, 0.8]}}}}]}},
    {{"id": "edge1", "kind": "edge-server", "motion": {{"type": "static", "position": [30, -10, 0]}},
      "worker": {{"lat_min": {latency}, "lat_max": {latency}, "p_fail": 0}}}}
  ],
  "objects": [
    {{"id": 1, "motion": {{"type": "constant-velocity", "p0": [20, 0, 0.75], "v": [3.5, 0, 0]}}}},
    {{"id": 2, "motion": {{"type": "constant-velocity", "p0": [35, 3.5, 0.75], "v": [2, 0, 0]}}}},
    {{"id": 3, "motion": {{"type": "constant-velocity", "p0": [70, -3.5, 0.75], "v": [-3, 0, 0]}}}}
  ],
  "network": {{"default": {{"base_latency": 0, "jitter": 0, "drop_prob": 0}}}},
  "pipeline": {{"mode": "cr-dist", "offload": {{"timeout": {timeout}}}}}
}}"#
    );
    load_scenario(&text).map_err(|e| e.to_string())
}

// 6
fn distributed_exactness() -> Verdict {
    let fresh = || TrackerState::new(TrackerConfig::default()).unwrap();

    // zero latency: every edge result is in order; compare the state after each local frame
    let out = run_mode(&dist_scenario(0.0, 1.0)?, Mode::CrDist, true)?;
    let d = &out.diagnostics;
    let counters = out.report.metrics.offload.clone().ok_or("no offload counters")?;
    ensure(counters.ok_integrated > 0, || "no edge result integrated".into())?;
    ensure(d.outcomes.iter().all(|o| *o == fusionbed::offload::IntegrateOutcome::Stepped), || {
        "zero-latency result needed a rollback".into()
    })?;
    ensure(d.batches.windows(2).all(|w| w[0].key < w[1].key), || "arrival order differs from time order".into())?;
    let mut oracle = fresh();
    let mut states = d.ego_states.iter();
    for b in &d.batches {
        oracle.step(&b.detections, b.key.t).map_err(|e| e.to_string())?;
        if b.key.class == CLASS_LOCAL {
            let (t, st) = states.next().ok_or("fewer recorded states than local frames")?;
            ensure(*t == b.key.t && *st == oracle, || format!("state stream diverges at t={t}"))?;
        }
    }
    ensure(states.next().is_none(), || "more recorded states than local frames".into())?;
    let zero_frames = d.ego_states.len();

    // 0.2 s: late results roll back and replay
    let out = run_mode(&dist_scenario(0.2, 1.0)?, Mode::CrDist, false)?;
    let d = &out.diagnostics;
    let c = out.report.metrics.offload.clone().ok_or("no offload counters")?;
    let replays = d.outcomes.iter().filter(|o| matches!(o, fusionbed::offload::IntegrateOutcome::Replayed(_))).count();
    ensure(replays > 0, || "no rollback exercised".into())?;
    ensure(c.stale_dropped == 0, || format!("{} stale results within the horizon", c.stale_dropped))?;
    let oracle = in_order_oracle(fresh(), d.batches.clone()).map_err(|e| e.to_string())?;
    ensure(d.ego_final.as_ref() == Some(&oracle), || "final state differs from in-order oracle".into())?;
    ensure(c.balanced(), || format!("counters unbalanced: {c:?}"))?;

    // 5 s: beyond the horizon, every returned result is stale
    let s5 = dist_scenario(5.0, 10.0)?;
    let out = run_mode(&s5, Mode::CrDist, false)?;
    let c5 = out.report.metrics.offload.clone().ok_or("no offload counters")?;
    ensure(c5.stale_dropped > 0 && c5.ok_integrated == 0, || format!("expected only stale results: {c5:?}"))?;
    ensure(c5.balanced(), || format!("counters unbalanced: {c5:?}"))?;
    let local_only = run_mode(&s5, Mode::Cr, false)?;
    ensure(out.diagnostics.ego_final == local_only.diagnostics.ego_final, || {
        "stale results changed the tracker".into()
    })?;
    Ok(format!(
        "latency 0: {zero_frames} frame states identical; 0.2 s: {replays} rollbacks, final state equals oracle; \
         5 s: {} stale, conservation {}/{}",
        c5.stale_dropped,
        c5.terminated(),
        c5.submitted
    ))
}

fn random_frame(r: &mut ChaCha8Rng) -> BusFrame {
    let types = [MsgType::Detections, MsgType::Tracks, MsgType::TaskReq, MsgType::TaskResp, MsgType::Heartbeat, MsgType::Clock];
    let topic_len = r.random_range(0..40);
    let topic: String = (0..topic_len)
        .map(|_| match r.random_range(0..4) {
            0 => char::from_u32(r.random_range(0x20..0x7f)).unwrap(),
            1 => char::from_u32(r.random_range(0xa0..0x800)).unwrap(),
            2 => '/',
            _ => char::from_u32(r.random_range(0x4e00..0x9fff)).unwrap(),
        })
        .collect();
    let payload: Vec<u8> = (0..r.random_range(0..300)).map(|_| r.random()).collect();
    BusFrame::new(types[r.random_range(0..types.len())], r.random(), topic, payload)
}

// 7
fn wire_protocol() -> Verdict {
    let golden: [u8; 22] = [
        0x46, 0x42, 0x55, 0x53, 0x01, 0x05, 0, 0, 0, 0, 0, 0, 0, 0, 0x02, 0x00, 0x68, 0x62, 0, 0, 0, 0,
    ];
    let hb = BusFrame::new(MsgType::Heartbeat, 0, "hb", Vec::new());
    let enc = encode(&hb).map_err(|e| e.to_string())?;
    ensure(enc == golden, || format!("heartbeat encodes to {enc:02x?}"))?;
    let (dec, used) = decode(&golden).map_err(|e| e.to_string())?;
    ensure(dec == hb && used == golden.len(), || "golden vector decode mismatch".into())?;

    let mut r = rng(7);
    let mut stream = Vec::new();
    let mut frames = Vec::new();
    for i in 0..FUZZ_FRAMES {
        let f = random_frame(&mut r);
        let bytes = encode(&f).map_err(|e| e.to_string())?;
        let (back, used) = decode(&bytes).map_err(|e| format!("frame {i}: {e}"))?;
        ensure(back == f && used == bytes.len(), || format!("frame {i} did not round-trip"))?;
        ensure(encode(&back).map_err(|e| e.to_string())? == bytes, || format!("frame {i} re-encodes differently"))?;
        if i < 200 {
            stream.extend_from_slice(&bytes);
            frames.push(f);
        }
    }
    let mut off = 0;
    for (i, f) in frames.iter().enumerate() {
        let (g, used) = decode(&stream[off..]).map_err(|e| format!("stream frame {i}: {e}"))?;
        ensure(&g == f, || format!("stream frame {i} mismatch"))?;
        off += used;
    }
    ensure(off == stream.len(), || "stream not fully consumed".into())?;

    let sample = encode(&BusFrame::new(MsgType::Tracks, 12, "tracks/ego", b"{}".to_vec())).unwrap();
    for cut in 0..sample.len() {
        ensure(matches!(decode(&sample[..cut]), Err(WireError::Truncated { .. })), || {
            format!("cut at {cut} not reported as Truncated")
        })?;
    }
    let corrupt = |i: usize, v: u8| {
        let mut b = sample.clone();
        b[i] = v;
        decode(&b)
    };
    ensure(matches!(corrupt(0, b'X'), Err(WireError::BadMagic(_))), || "magic corruption not BadMagic".into())?;
    ensure(corrupt(4, 9) == Err(WireError::BadVersion(9)), || "version corruption not BadVersion".into())?;
    ensure(corrupt(5, 0xee) == Err(WireError::UnknownType(0xee)), || "type corruption not UnknownType".into())?;
    Ok(format!("golden 22-byte HEARTBEAT exact; {FUZZ_FRAMES} fuzzed frames round-trip; all truncations and corruptions named"))
}

fn frame(t: f64, gt: &[(u64, Vec3)], est: &[(u64, Vec3)], prev: &mut BTreeMap<u64, u64>) -> FrameMatchResult {
    let f = match_frame(t, gt, est, 2.0, prev);
    for &(g, e, _) in &f.matches {
        prev.insert(g, e);
    }
    f
}

// 8
fn metrics() -> Verdict {
    ensure(mota_from_counts(20, 2, 3, 1) == Some(0.7), || "mota_from_counts(20,2,3,1) != 0.7".into())?;
    // hand trace: 2 objects x 10 frames; 3 misses, 2 false alarms, 1 identity swap
    let mut prev = BTreeMap::new();
    let mut frames = Vec::new();
    for k in 0..10 {
        let t = k as f64 * 0.1;
        let (a, b) = (vec3(k as f64, 0.0, 0.0), vec3(k as f64, 10.0, 0.0));
        let gt = [(1, a), (2, b)];
        let mut est = Vec::new();
        if !(k == 2 || k == 3) {
            est.push((if k < 6 { 100 } else { 101 }, a + vec3(0.1, 0.0, 0.0)));
        }
        if k != 8 {
            est.push((200, b));
        }
        if k == 4 || k == 7 {
            est.push((300, vec3(-50.0, -50.0, 0.0)));
        }
        frames.push(frame(t, &gt, &est, &mut prev));
    }
    let m = clear_mot(&frames);
    let counts: (u64, u64, u64) = frames.iter().fold((0, 0, 0), |s, f| (s.0 + f.gt_count(), s.1 + f.fp, s.2 + f.fn_));
    ensure(counts == (20, 2, 3) && m.id_switches == 1, || format!("trace counts {counts:?} idsw {}", m.id_switches))?;
    ensure(m.mota == Some(0.7), || format!("trace MOTA {:?}", m.mota))?;

    let mut r = rng(8);
    let c = 5.0;
    let set = |r: &mut ChaCha8Rng| -> Vec<Vec3> {
        (0..r.random_range(0..6))
            .map(|_| vec3(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0), 0.0))
            .collect()
    };
    for trial in 0..OSPA_TRIALS {
        let (a, b) = (set(&mut r), set(&mut r));
        let (ab, ba) = (ospa(&a, &b, c, 1.0), ospa(&b, &a, c, 1.0));
        ensure(ab == ba, || format!("trial {trial}: asymmetric {ab} vs {ba}"))?;
        ensure((0.0..=c).contains(&ab), || format!("trial {trial}: {ab} outside [0, c]"))?;
        ensure(ospa(&a, &a, c, 1.0) == 0.0, || format!("trial {trial}: d(a, a) != 0"))?;
        if a.is_empty() != b.is_empty() {
            ensure(ab == c, || format!("trial {trial}: one empty set gives {ab}"))?;
        }
    }
    ensure(ospa(&[], &[], c, 1.0) == 0.0, || "both empty != 0".into())?;
    Ok(format!("hand trace MOTA 0.7 exact; OSPA axioms hold on {OSPA_TRIALS} random set pairs"))
}

// 9
fn network_model() -> Verdict {
    let link = Link::new("a", "b");
    let model = |p: LinkParams| {
        let mut n = NetworkModel {
            default: None,
            ..Default::default()
        };
        n.links.insert(link.clone(), p);
        n
    };
    let lossy = model(LinkParams {
        base_latency: 0.05,
        jitter: 0.01,
        drop_prob: DROP_PROB,
    });
    let mut r = fusionbed::rng::stream(9, &fusionbed::rng::link_key("a", "b"));
    let mut dropped = 0;
    for i in 0..NET_SENDS {
        if lossy.deliver(&link, i as f64, &mut r).map_err(|e| e.to_string())? == Delivery::Dropped {
            dropped += 1;
        }
    }
    let rate = dropped as f64 / NET_SENDS as f64;
    ensure((rate - DROP_PROB).abs() <= DROP_TOL, || format!("drop rate {rate}"))?;
    let base = 0.05;
    let clean = model(LinkParams {
        base_latency: base,
        jitter: 0.0,
        drop_prob: 0.0,
    });
    let mut total = 0.0;
    for i in 0..NET_SENDS {
        let send = i as f64 * 0.01;
        match clean.deliver(&link, send, &mut r).map_err(|e| e.to_string())? {
            Delivery::Delivered { at } => total += at - send,
            Delivery::Dropped => return Err("drop at drop_prob 0".into()),
        }
    }
    let mean = total / NET_SENDS as f64;
    ensure(((mean - base) / base).abs() <= LATENCY_REL_TOL, || format!("mean latency {mean}"))?;
    Ok(format!("drop rate {rate:.4} (target {DROP_PROB}); mean latency {mean:.6} s (base {base})"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("determinism", determinism),
        ("assignment oracle", assignment_oracle),
        ("filter consistency", filter_consistency),
        ("covariance intersection", ci_correctness),
        ("collaborative benefit", collaborative_benefit),
        ("distributed exactness", distributed_exactness),
        ("wire protocol", wire_protocol),
        ("metrics", metrics),
        ("network model", network_model),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {} {name} [{secs:.2} s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} [{secs:.2} s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
