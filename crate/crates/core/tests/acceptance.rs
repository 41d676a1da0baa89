//! Acceptance suite: one pass/fail line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use ppkern::dataflow::{ArrayId, Flow, SliceSpec};
use ppkern::engine::{CallArgs, EngineError, OpDef, OtherPars, OtherValue, Registry, RunOptions};
use ppkern::ndarray::{Dtype, NdArray, StateFlags};
use ppkern::sigparse::signature;
use ppkern::typesys::{param_dtype, promote, resolve_generic, GenericList};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn d1(v: &[f64]) -> NdArray {
    NdArray::from_f64(Dtype::Double, &[v.len()], v)
}

fn other(pairs: &[(&str, OtherValue)]) -> OtherPars {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ppkern")
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn c1_linscale() -> Outcome {
    let reg = Registry::with_corpus();
    let out = reg.call("linscale", &[d1(&[1.0, 2.0, 3.0]), NdArray::scalar(Dtype::Double, 2.0), d1(&[4.0, 5.0, 6.0])])
        .map_err(|e| e.to_string())?;
    ensure!(out[0].to_f64_vec() == vec![6.0, 9.0, 12.0], "library result {:?}", out[0].to_f64_vec());
    let ints = reg
        .call("linscale", &[
            NdArray::from_i64(Dtype::Int, &[3], &[1, 2, 3]),
            NdArray::scalar(Dtype::Int, 2),
            NdArray::from_i64(Dtype::Int, &[3], &[4, 5, 6]),
        ])
        .map_err(|e| e.to_string())?;
    ensure!(ints[0].dtype() == Dtype::Int, "int call ran as {}", ints[0].dtype());
    ensure!(ints[0].to_f64_vec() == vec![6.0, 9.0, 12.0], "int result {:?}", ints[0].to_f64_vec());
    let o = Command::new(bin())
        .args(["run", "--op", "linscale", "--arg", "a=double[3]{1 2 3}", "--arg", "b=double[]{2}", "--arg"])
        .arg("c=double[3]{4 5 6}")
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&o.stdout);
    ensure!(o.status.success() && text == "double[3]{6 9 12}\n", "cli printed {text:?}");
    Ok(())
}

fn scalar_of(flow: &mut Flow, id: ArrayId) -> Result<f64, String> {
    Ok(flow.read(id).map_err(|e| e.to_string())?.to_f64_vec()[0])
}

fn add_one(flow: &mut Flow, id: ArrayId) -> Outcome {
    flow.update(id, |a| {
        let v = a.at(&[]).unwrap().as_f64();
        a.set_at(&[], v + 1.0).unwrap();
    })
    .map_err(|e| e.to_string())
}

fn c2_ftoc() -> Outcome {
    let reg = Registry::with_corpus();
    let mut flow = Flow::new();
    let f = flow.insert(NdArray::scalar(Dtype::Double, 32.0));
    let c = flow.connect(&reg, "FtoC", f, &OtherPars::new()).map_err(|e| e.to_string())?;
    let c0 = scalar_of(&mut flow, c)?;
    ensure!(c0 == 0.0, "C = {c0}");
    add_one(&mut flow, c)?;
    let f1 = scalar_of(&mut flow, f)?;
    ensure!((f1 - 33.8).abs() < 1e-9, "F = {f1}");
    add_one(&mut flow, f)?;
    let c2 = scalar_of(&mut flow, c)?;
    ensure!((c2 - 1.55555555555555).abs() < 1e-9, "C = {c2}");
    Ok(())
}

fn c3_shapes() -> Outcome {
    let reg = Registry::with_corpus();
    let src = NdArray::zeros(Dtype::Double, &[10, 20]);
    let run = |dex: NdArray, op: &str, dname: &str, sname: &str| {
        let mut args = CallArgs::new().with(sname, src.clone()).with(dname, dex);
        reg.run_op(op, &mut args, &OtherPars::new(), &RunOptions::default())
    };
    let out = run(NdArray::scalar(Dtype::Indx, 0), "index1d", "dex", "src").map_err(|e| e.to_string())?;
    ensure!(out[0].dims() == [1, 20], "scalar dex gives {:?}", out[0].dims());
    let out = run(NdArray::zeros(Dtype::Indx, &[2]), "index1d", "dex", "src").map_err(|e| e.to_string())?;
    ensure!(out[0].dims() == [2, 20], "dex[2] gives {:?}", out[0].dims());
    match run(NdArray::zeros(Dtype::Indx, &[2]), "index", "ind", "a") {
        Err(EngineError::ThreadDimMismatch { .. }) => Ok(()),
        other => Err(format!("index(src[10,20], dex[2]) gave {other:?}")),
    }
}

fn c4_increments() -> Outcome {
    let reg = Registry::with_corpus();
    let out = reg.call("increments", &[d1(&[1.0, 4.0, 9.0, 16.0, 25.0])]).map_err(|e| e.to_string())?;
    ensure!(out[0].to_f64_vec() == vec![3.0, 5.0, 7.0, 9.0], "diffs {:?}", out[0].to_f64_vec());
    for n in [1usize, 0] {
        let out = reg.call("increments", &[d1(&vec![9.0; n])]).map_err(|e| e.to_string())?;
        ensure!(out[0].dims() == [0], "[{n}] gives {:?}", out[0].dims());
    }
    let base = [2.0, 3.0, 5.0, 7.0];
    for mask in 0u32..16 {
        let bad = |i: usize| mask >> i & 1 == 1;
        let vals: Vec<f64> = (0..4).map(|i| if bad(i) { f64::NAN } else { base[i] }).collect();
        let mut a = d1(&vals);
        a.set_badflag(true);
        let out = reg.call("increments", &[a]).map_err(|e| e.to_string())?;
        let o = &out[0];
        let any_bad = (0..3).any(|i| bad(i) || bad(i + 1));
        ensure!(o.badflag() == any_bad, "mask {mask:04b}: output badflag {}", o.badflag());
        for i in 0..3 {
            let v = o.at(&[i]).unwrap();
            let want_bad = bad(i) || bad(i + 1);
            ensure!(o.is_bad_value(v) == want_bad, "mask {mask:04b} slot {i}: {v:?}");
            if !want_bad {
                ensure!(v.as_f64() == base[i + 1] - base[i], "mask {mask:04b} slot {i}: {v:?}");
            }
        }
    }
    Ok(())
}

fn c5_bad_dispatch() -> Outcome {
    let reg = Registry::with_corpus();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for _ in 0..200 {
        let n = rng.gen_range(0..=16);
        let bad: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let vals: Vec<i64> = bad.iter().map(|&b| if b { -32768 } else { rng.gen_range(-100..100) }).collect();
        let expected = bad.iter().filter(|&&b| b).count() as f64;
        let mut a = NdArray::from_i64(Dtype::Short, &[n], &vals);
        let clear = reg.call("countbad", &[a.clone()]).map_err(|e| e.to_string())?;
        ensure!(clear[0].to_f64_vec() == vec![0.0], "clear flag counted {:?}", clear[0].to_f64_vec());
        a.set_badflag(true);
        let set = reg.call("countbad", &[a]).map_err(|e| e.to_string())?;
        ensure!(set[0].to_f64_vec() == vec![expected], "{vals:?}: got {:?}, want {expected}", set[0].to_f64_vec());
    }
    let out = reg.call("recip", &[d1(&[2.0, 0.0])]).map_err(|e| e.to_string())?;
    let o = &out[0];
    ensure!(o.badflag(), "recip(0) left the output badflag clear");
    ensure!(o.at(&[0]).unwrap().as_f64() == 0.5, "recip(2) = {:?}", o.at(&[0]));
    ensure!(o.is_bad_value(o.at(&[1]).unwrap()), "recip(0) slot is {:?}", o.at(&[1]));
    Ok(())
}

/// Broadcast shape by direct comparison of padded dims.
fn ref_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    (0..a.len().max(b.len()))
        .map(|k| {
            let (x, y) = (a.get(k).copied().unwrap_or(1), b.get(k).copied().unwrap_or(1));
            match (x, y) {
                _ if x == y => Some(x),
                (1, _) => Some(y),
                (_, 1) => Some(x),
                _ => None,
            }
        })
        .collect()
}

fn ref_get(vals: &[f64], dims: &[usize], idx: &[usize]) -> f64 {
    let mut off = 0;
    let mut stride = 1;
    for (k, &n) in dims.iter().enumerate() {
        if n != 1 {
            off += idx[k] * stride;
        }
        stride *= n;
    }
    vals[off]
}

fn c6_broadcast_oracle() -> Outcome {
    let mut reg = Registry::new();
    reg.register_op(OpDef::new("bc", "a(); b(); [o]c()").and_then(|d| d.with_kernel("code", "$c() = $a() * 100 + $b();")).unwrap())
        .unwrap();
    let dims = prop::collection::vec(0usize..=4, 0..=4);
    let strategy = (dims.clone(), dims, any::<u64>());
    let mut runner = TestRunner::new(Config { cases: 500, failure_persistence: None, ..Config::default() });
    let violations = std::cell::Cell::new(0usize);
    let res = runner.run(&strategy, |(da, db, seed)| {
        let mut rng = StdRng::seed_from_u64(seed);
        let va: Vec<f64> = (0..da.iter().product::<usize>()).map(|_| rng.gen_range(-50..50) as f64).collect();
        let vb: Vec<f64> = (0..db.iter().product::<usize>()).map(|_| rng.gen_range(-50..50) as f64).collect();
        let a = NdArray::from_f64(Dtype::Double, &da, &va);
        let b = NdArray::from_f64(Dtype::Double, &db, &vb);
        let got = reg.call("bc", &[a, b]);
        match (ref_shape(&da, &db), got) {
            (None, Err(EngineError::ThreadDimMismatch { .. })) => {
                violations.set(violations.get() + 1);
                Ok(())
            }
            (Some(shape), Ok(out)) => {
                let c = &out[0];
                prop_assert_eq!(c.dims(), shape.as_slice());
                let mut idx = vec![0usize; shape.len()];
                let total: usize = shape.iter().product();
                for _ in 0..total {
                    let want = ref_get(&va, &da, &idx) * 100.0 + ref_get(&vb, &db, &idx);
                    prop_assert_eq!(c.at(&idx).unwrap().as_f64(), want);
                    ppkern::ndarray::increment_index(&mut idx, &shape);
                }
                Ok(())
            }
            (r, g) => Err(TestCaseError::fail(format!("{da:?} vs {db:?}: reference {r:?}, engine {g:?}"))),
        }
    });
    res.map_err(|e| e.to_string())?;
    ensure!(violations.get() > 0, "no rule-3 violations were generated");
    Ok(())
}

fn corpus_calls() -> Vec<(&'static str, CallArgs, OtherPars)> {
    let ramp = |t: Dtype, dims: &[usize], scale: f64| {
        let n: usize = dims.iter().product();
        NdArray::from_f64(t, dims, &(0..n).map(|i| (i as f64 * 0.37 - 1.1) * scale).collect::<Vec<_>>())
    };
    let mut bad = ramp(Dtype::Double, &[4, 3], 1.0);
    bad.set_elem(5, f64::NAN).unwrap();
    bad.set_badflag(true);
    let mut recip_in = d1(&[0.0, 2.0, -4.0, 0.0, 8.0, f64::NAN]);
    recip_in.set_badflag(true);
    vec![
        (
            "linscale",
            CallArgs::new()
                .with("a", ramp(Dtype::Double, &[3, 2], 1.0))
                .with("b", ramp(Dtype::Double, &[1, 2], 2.0))
                .with("c", ramp(Dtype::Double, &[3], 1.0)),
            OtherPars::new(),
        ),
        ("pp_mandel", CallArgs::new().with("c", ramp(Dtype::Double, &[2, 4, 3], 0.6)), other(&[("max_it", OtherValue::Int(40))])),
        ("cartND", CallArgs::new().with("vec", ramp(Dtype::Float, &[3, 4], 1.0)), OtherPars::new()),
        ("multisum", CallArgs::new().with("im", ramp(Dtype::Double, &[3, 4, 2], 1.0)), OtherPars::new()),
        (
            "solve_quad",
            CallArgs::new().with("coeffs", NdArray::from_f64(Dtype::Double, &[3, 2], &[-4.0, 0.0, 1.0, 1.0, 0.0, 1.0])),
            OtherPars::new(),
        ),
        ("countbad", CallArgs::new().with("in", bad.clone()), OtherPars::new()),
        ("recip", CallArgs::new().with("in", recip_in), OtherPars::new()),
        ("increments", CallArgs::new().with("in", bad), OtherPars::new()),
        (
            "index",
            CallArgs::new()
                .with("a", ramp(Dtype::Double, &[4, 3], 1.0))
                .with("ind", NdArray::from_i64(Dtype::Indx, &[3], &[3, 0, 2])),
            OtherPars::new(),
        ),
        (
            "index1d",
            CallArgs::new()
                .with("src", ramp(Dtype::Double, &[4, 3], 1.0))
                .with("dex", NdArray::from_i64(Dtype::Indx, &[2, 3], &[1, 0, 3, 3, 2, 1])),
            OtherPars::new(),
        ),
        ("scale", CallArgs::new().with("a", ramp(Dtype::Double, &[5, 2], 1.0)), other(&[("factor", OtherValue::Float(1.5))])),
    ]
}

fn c7_order_independence() -> Outcome {
    let reg = Registry::with_corpus();
    let calls = corpus_calls();
    for name in reg.names() {
        let def = reg.get(name).unwrap();
        if def.is_flow() {
            continue;
        }
        ensure!(calls.iter().any(|c| c.0 == name), "no inputs prepared for corpus op {name}");
    }
    for (name, args, other) in calls {
        let mut fwd_args = args.clone();
        let mut rev_args = args;
        let fwd = reg.run_op(name, &mut fwd_args, &other, &RunOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let rev_opts = RunOptions { reverse_sweep: true, ..RunOptions::default() };
        let rev = reg.run_op(name, &mut rev_args, &other, &rev_opts).map_err(|e| format!("{name}: {e}"))?;
        ensure!(fwd.len() == rev.len(), "{name}: output counts differ");
        for (a, b) in fwd.iter().zip(&rev) {
            ensure!(a.dims() == b.dims() && a.same_values(b) && a.badflag() == b.badflag(), "{name}: outputs differ");
        }
    }
    Ok(())
}

fn c8_types() -> Outcome {
    let ladder = [
        Dtype::Byte,
        Dtype::Short,
        Dtype::UShort,
        Dtype::Int,
        Dtype::Indx,
        Dtype::LongLong,
        Dtype::Float,
        Dtype::Double,
    ];
    let sig = signature("a(); b(); [o]c()").unwrap();
    for (i, &x) in ladder.iter().enumerate() {
        for (j, &y) in ladder.iter().enumerate() {
            let want = ladder[i.max(j)];
            ensure!(promote(x, y) == want, "promote({x}, {y}) = {}", promote(x, y));
            let g = resolve_generic(&sig, &[Some(x), Some(y), None], &GenericList::all()).map_err(|e| e.to_string())?;
            ensure!(g == want, "generic for ({x}, {y}) = {g}");
        }
    }
    let sig = signature("float+ a(); b(m,n); [o]c").unwrap();
    let g = resolve_generic(&sig, &[Some(Dtype::Float), Some(Dtype::Byte), None], &GenericList::all()).map_err(|e| e.to_string())?;
    ensure!(g == Dtype::Byte, "b was promoted to {g}");
    ensure!(param_dtype(&sig.params[0], g) == Dtype::Float, "a runs as {}", param_dtype(&sig.params[0], g));
    ensure!(param_dtype(&sig.params[2], g) == Dtype::Byte, "c runs as {}", param_dtype(&sig.params[2], g));
    let g = resolve_generic(&sig, &[Some(Dtype::Byte), Some(Dtype::Double), None], &GenericList::all()).map_err(|e| e.to_string())?;
    ensure!(param_dtype(&sig.params[0], g) == Dtype::Double, "a under double runs as {}", param_dtype(&sig.params[0], g));

    let reg = Registry::with_corpus();
    for t in [Dtype::Byte, Dtype::Short, Dtype::Int, Dtype::LongLong] {
        let out = reg.call("cartND", &[NdArray::from_i64(t, &[2], &[3, 4])]).map_err(|e| e.to_string())?;
        ensure!(out[0].dtype() == Dtype::Float, "cartND({t}) ran as {}", out[0].dtype());
        ensure!(out[0].to_f64_vec() == vec![5.0], "cartND({t}) = {:?}", out[0].to_f64_vec());
    }
    Ok(())
}

/// Straightforward escape-time iteration counting down from `max_it`.
fn mandel_ref(cr: f64, ci: f64, max_it: i64) -> i64 {
    let (mut zr, mut zi) = (cr, ci);
    let mut i = max_it;
    while zr * zr + zi * zi < 4.0 && i > 0 {
        let t = zr * zr - zi * zi + cr;
        zi = 2.0 * zr * zi + ci;
        zr = t;
        i -= 1;
    }
    i
}

fn c9_mandel() -> Outcome {
    const N: usize = 200;
    const MAX_IT: i64 = 1000;
    let coord = |k: usize| -2.0 + 4.0 * k as f64 / N as f64;
    let mut grid = Vec::with_capacity(2 * N * N);
    for y in 0..N {
        for x in 0..N {
            grid.push(coord(x));
            grid.push(coord(y));
        }
    }
    let c = NdArray::from_f64(Dtype::Double, &[2, N, N], &grid);
    let reg = Registry::with_corpus();
    let start = Instant::now();
    let out = reg.call_with("pp_mandel", &[c], &other(&[("max_it", OtherValue::Int(MAX_IT))])).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2}s");
    let o = &out[0];
    ensure!(o.dims() == [N, N], "dims {:?}", o.dims());
    let at = |x: usize, y: usize| o.at(&[x, y]).unwrap().as_f64();
    ensure!(at(N / 2, N / 2) == 0.0, "c=(0,0) gives {}", at(N / 2, N / 2));
    let mut zeros = 0usize;
    let mut ref_zeros = 0usize;
    for y in 0..N {
        for x in 0..N {
            let (cr, ci) = (coord(x), coord(y));
            if cr * cr + ci * ci > 4.0 {
                ensure!(at(x, y) == MAX_IT as f64, "|c|>2 at ({cr},{ci}) gives {}", at(x, y));
            }
            zeros += usize::from(at(x, y) == 0.0);
            ref_zeros += usize::from(mandel_ref(cr, ci, MAX_IT) == 0);
        }
    }
    let slack = ref_zeros / 100 + 1;
    ensure!(zeros.abs_diff(ref_zeros) <= slack, "{zeros} zero slots, reference {ref_zeros}");
    ensure!((3000..=4500).contains(&ref_zeros), "reference zero count {ref_zeros} outside the set-area bracket");
    Ok(())
}

const GOLDEN_CASES: [(&str, bool); 5] =
    [("linscale", false), ("cartND", false), ("recip", false), ("recip", true), ("pp_mandel", false)];

fn expand_text(op: &str, t: &str, bad: bool) -> Result<String, String> {
    let mut cmd = Command::new(bin());
    cmd.args(["expand", "--op", op, "--type", t]);
    if bad {
        cmd.arg("--bad");
    }
    let o = cmd.output().map_err(|e| e.to_string())?;
    ensure!(o.status.success(), "expand {op} {t}: {}", String::from_utf8_lossy(&o.stderr));
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn c10_goldens() -> Outcome {
    for (op, bad) in GOLDEN_CASES {
        for t in ["double", "float"] {
            let first = expand_text(op, t, bad)?;
            let second = expand_text(op, t, bad)?;
            ensure!(first == second, "{op} {t}: output differs between runs");
            let name = format!("{op}_{t}{}.txt", if bad { "_bad" } else { "" });
            let path = golden_dir().join(&name);
            let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            ensure!(first == golden, "{name}: output differs from the golden file");
        }
    }
    Ok(())
}

fn c11_affine() -> Outcome {
    let data: Vec<f64> = (0..12).map(f64::from).collect();
    let mut flow = Flow::new();
    let p = flow.insert(NdArray::from_f64(Dtype::Double, &[3, 4], &data));
    let full = flow
        .slice_affine(p, &[SliceSpec::All, SliceSpec::Range { start: 0, end: 3, step: 1 }])
        .map_err(|e| e.to_string())?;
    let v = flow.view(full).map_err(|e| e.to_string())?.to_f64_vec();
    ensure!(v == data, "full slice reads {v:?}");
    ensure!(flow.stats().copies == 0, "full slice copied {} elements", flow.stats().copies);

    let ranges = |n: usize| {
        let mut r = Vec::new();
        for start in 0..n {
            for step in [1isize, 2, -1] {
                let count = if step > 0 { (n - 1 - start) / step as usize + 1 } else { start + 1 };
                let end = (start as isize + (count as isize - 1) * step) as usize;
                r.push((start, step, count, end));
            }
        }
        r
    };
    for &(s0, st0, n0, e0) in &ranges(3) {
        for &(s1, st1, n1, e1) in &ranges(4) {
            let child = flow
                .slice_affine(p, &[
                    SliceSpec::Range { start: s0, end: e0, step: st0 },
                    SliceSpec::Range { start: s1, end: e1, step: st1 },
                ])
                .map_err(|e| e.to_string())?;
            let view = flow.view(child).map_err(|e| e.to_string())?;
            ensure!(view.dims() == [n0, n1], "dims {:?} for ({s0},{st0})x({s1},{st1})", view.dims());
            for j in 0..n1 {
                for i in 0..n0 {
                    let pi = s0 as isize + i as isize * st0;
                    let pj = s1 as isize + j as isize * st1;
                    let want = data[(pi + 3 * pj) as usize];
                    let got = view.at(&[i, j]).map_err(|e| e.to_string())?.as_f64();
                    ensure!(got == want, "({s0},{st0})x({s1},{st1}) at [{i},{j}]: {got} != {want}");
                }
            }
        }
    }
    ensure!(flow.stats().copies == 0, "strided views copied {} elements", flow.stats().copies);

    let col = flow.slice_affine(p, &[SliceSpec::All, SliceSpec::Index(2)]).map_err(|e| e.to_string())?;
    flow.sever(col).map_err(|e| e.to_string())?;
    flow.set(p, &[0, 2], 100.0).map_err(|e| e.to_string())?;
    let v = flow.read(col).map_err(|e| e.to_string())?.to_f64_vec();
    ensure!(v == vec![6.0, 7.0, 8.0], "severed child sees {v:?}");
    ensure!(!flow.shares_storage(p, col), "severed child still shares storage");
    Ok(())
}

fn check_settled(flow: &mut Flow, id: ArrayId, what: &str) -> Outcome {
    flow.read(id).map_err(|e| format!("{what}: {e}"))?;
    let st = flow.header(id).unwrap().state();
    ensure!(!st.intersects(StateFlags::ANYCHANGED), "{what}: flags {st:?} after read");
    let runs = flow.stats().kernel_runs;
    flow.make_physical(id).map_err(|e| e.to_string())?;
    ensure!(flow.stats().kernel_runs == runs, "{what}: second make_physical ran a kernel");
    Ok(())
}

fn c12_flags() -> Outcome {
    let reg = Registry::with_corpus();
    let no = OtherPars::new();
    let mut flow = Flow::new();
    let f = flow.insert(d1(&[32.0, 212.0, -40.0, 50.0]));
    let c = flow.connect(&reg, "FtoC", f, &no).map_err(|e| e.to_string())?;
    check_settled(&mut flow, c, "FtoC read")?;
    flow.set(c, &[1], 0.0).map_err(|e| e.to_string())?;
    check_settled(&mut flow, f, "FtoC parent after back-flow")?;
    check_settled(&mut flow, c, "FtoC child after back-flow")?;
    flow.set(f, &[0], 212.0).map_err(|e| e.to_string())?;
    check_settled(&mut flow, c, "FtoC after parent write")?;

    let sl = other(&[("start", OtherValue::Int(1)), ("step", OtherValue::Int(2)), ("count", OtherValue::Int(3))]);
    let s = flow.connect(&reg, "slice", f, &sl).map_err(|e| e.to_string())?;
    check_settled(&mut flow, s, "slice read")?;
    let sc = flow.connect(&reg, "FtoC", s, &no).map_err(|e| e.to_string())?;
    check_settled(&mut flow, sc, "FtoC of slice")?;
    flow.set(sc, &[0], 100.0).map_err(|e| e.to_string())?;
    check_settled(&mut flow, f, "root after two-level back-flow")?;
    check_settled(&mut flow, c, "sibling after two-level back-flow")?;

    let id = flow.connect(&reg, "identoffs", f, &no).map_err(|e| e.to_string())?;
    check_settled(&mut flow, id, "identoffs")?;
    let sh = flow.connect(&reg, "shiftoffs", f, &other(&[("shift", OtherValue::Int(-1))])).map_err(|e| e.to_string())?;
    check_settled(&mut flow, sh, "shiftoffs")?;
    let view = flow.slice_affine(f, &[SliceSpec::Range { start: 3, end: 0, step: -1 }]).map_err(|e| e.to_string())?;
    check_settled(&mut flow, view, "affine view")?;
    let vc = flow.connect(&reg, "FtoC", view, &no).map_err(|e| e.to_string())?;
    check_settled(&mut flow, vc, "FtoC of affine view")?;
    flow.set(view, &[0], 41.0).map_err(|e| e.to_string())?;
    for (id, what) in [(vc, "after view write"), (c, "FtoC after view write"), (sh, "shiftoffs after view write")] {
        check_settled(&mut flow, id, what)?;
    }
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("linscale exact via library and cli", c1_linscale),
        ("FtoC dataflow transcript", c2_ftoc),
        ("index/index1d shape semantics", c3_shapes),
        ("increments sizes and bad patterns", c4_increments),
        ("bad-value dispatch", c5_bad_dispatch),
        ("broadcast oracle, 500 cases", c6_broadcast_oracle),
        ("thread-tuple order independence", c7_order_independence),
        ("type resolution", c8_types),
        ("pp_mandel 2x200x200", c9_mandel),
        ("expansion goldens", c10_goldens),
        ("affine slices", c11_affine),
        ("dataflow flag discipline", c12_flags),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let ms = start.elapsed().as_millis();
        match res {
            Ok(()) => println!("[PASS] {:>2} {name} ({ms} ms)", i + 1),
            Err(e) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {e}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
