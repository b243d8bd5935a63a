use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lgmc_core::container::{self, AnyTensor};
use lgmc_core::frames::Image;
use lgmc_core::motion::FlowField;
use lgmc_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn lgmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code_of(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn random_tensor(seed: u64, dims: &[usize]) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(dims, |_| rng.gen_range(-2.0..2.0)).unwrap()
}

fn read(path: &Path) -> Tensor<f64> {
    container::read_file(path).unwrap().to_f64().unwrap()
}

/// Naive softmax(Q, rows) · (softmax(K, columns)ᵀ K).
fn efficient_oracle(q: &Tensor<f64>, kv: &Tensor<f64>) -> Vec<f64> {
    let (lq, c) = (q.dims()[0], q.dims()[1]);
    let lk = kv.dims()[0];
    let (qd, kd) = (q.data(), kv.data());
    let mut sq = vec![0.0; lq * c];
    for i in 0..lq {
        let row = &qd[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        for j in 0..c {
            sq[i * c + j] = (row[j] - m).exp() / z;
        }
    }
    let mut sk = vec![0.0; lk * c];
    for j in 0..c {
        let m = (0..lk).map(|i| kd[i * c + j]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..lk).map(|i| (kd[i * c + j] - m).exp()).sum();
        for i in 0..lk {
            sk[i * c + j] = (kd[i * c + j] - m).exp() / z;
        }
    }
    let mut ctx = vec![0.0; c * c];
    for a in 0..c {
        for b in 0..c {
            ctx[a * c + b] = (0..lk).map(|i| sk[i * c + a] * kd[i * c + b]).sum();
        }
    }
    let mut out = vec![0.0; lq * c];
    for i in 0..lq {
        for b in 0..c {
            out[i * c + b] = (0..c).map(|a| sq[i * c + a] * ctx[a * c + b]).sum();
        }
    }
    out
}

#[test]
fn attend_efficient_matches_naive_oracle() {
    let dir = TempDir::new().unwrap();
    let q = random_tensor(1, &[7, 5]);
    let kv = random_tensor(2, &[11, 5]);
    container::write_file(p(&dir, "q"), &q).unwrap();
    container::write_file(p(&dir, "kv"), &kv).unwrap();
    let out = lgmc(&["attend", s(&p(&dir, "q")), s(&p(&dir, "kv")), "-o", s(&p(&dir, "o"))]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    let got = read(&p(&dir, "o"));
    assert_eq!(got.dims(), &[7, 5]);
    for (a, b) in got.data().iter().zip(efficient_oracle(&q, &kv)) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn attend_materialized_similarity_is_row_stochastic() {
    let dir = TempDir::new().unwrap();
    container::write_file(p(&dir, "q"), &random_tensor(3, &[6, 4])).unwrap();
    container::write_file(p(&dir, "kv"), &random_tensor(4, &[9, 4])).unwrap();
    for variant in ["vanilla", "efficient"] {
        let out = lgmc(&[
            "attend",
            s(&p(&dir, "q")),
            s(&p(&dir, "kv")),
            "--variant",
            variant,
            "--materialize",
            "-o",
            s(&p(&dir, "o")),
        ]);
        assert_eq!(code_of(&out), 0, "{out:?}");
        let sim = read(&p(&dir, "o.sim"));
        assert_eq!(sim.dims(), &[6, 9]);
        for row in sim.data().chunks(9) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn attend_keeps_map_layout_and_precision() {
    let dir = TempDir::new().unwrap();
    let map = Tensor::<f32>::from_fn(&[4, 3, 5], |i| (i as f32 * 0.37).sin()).unwrap();
    container::write_file(p(&dir, "m"), &map).unwrap();
    let out = lgmc(&["attend", s(&p(&dir, "m")), s(&p(&dir, "m")), "-o", s(&p(&dir, "o"))]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    match container::read_file(p(&dir, "o")).unwrap() {
        AnyTensor::F32(t) => assert_eq!(t.dims(), &[4, 3, 5]),
        other => panic!("expected f32 output, got {:?}", other.dims()),
    }
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = TempDir::new().unwrap();
    std::fs::write(p(&dir, "junk"), b"not a tensor").unwrap();
    container::write_file(p(&dir, "q"), &random_tensor(5, &[8, 4])).unwrap();
    container::write_file(p(&dir, "kv3"), &random_tensor(6, &[8, 3])).unwrap();
    let o = s(&p(&dir, "o")).to_string();

    let malformed = lgmc(&["attend", s(&p(&dir, "junk")), s(&p(&dir, "q")), "-o", &o]);
    assert_eq!(code_of(&malformed), 2);

    let mismatch = lgmc(&["attend", s(&p(&dir, "q")), s(&p(&dir, "kv3")), "-o", &o]);
    assert_eq!(code_of(&mismatch), 3);

    let capped = lgmc(&["attend", s(&p(&dir, "q")), s(&p(&dir, "q")), "--materialize", "--cap", "63", "-o", &o]);
    assert_eq!(code_of(&capped), 4);
    let at_cap = lgmc(&["attend", s(&p(&dir, "q")), s(&p(&dir, "q")), "--materialize", "--cap", "64", "-o", &o]);
    assert_eq!(code_of(&at_cap), 0);

    std::fs::write(p(&dir, "a.csv"), "rate_bpp,quality\n0.1,30\n0.2,32\n0.4,34\n0.8,36\n").unwrap();
    std::fs::write(p(&dir, "b.csv"), "rate_bpp,quality\n0.1,40\n0.2,42\n0.4,44\n0.8,46\n").unwrap();
    let disjoint = lgmc(&["bdrate", s(&p(&dir, "a.csv")), s(&p(&dir, "b.csv"))]);
    assert_eq!(code_of(&disjoint), 5);
}

#[test]
fn warp_by_zero_flow_is_identity_and_checks_size() {
    let dir = TempDir::new().unwrap();
    let f = random_tensor(7, &[3, 6, 9]);
    container::write_file(p(&dir, "f"), &f).unwrap();
    FlowField::zeros(9, 6).unwrap().write(p(&dir, "zero.flo")).unwrap();
    FlowField::zeros(8, 6).unwrap().write(p(&dir, "small.flo")).unwrap();
    let ok = lgmc(&["warp", s(&p(&dir, "f")), s(&p(&dir, "zero.flo")), "-o", s(&p(&dir, "o"))]);
    assert_eq!(code_of(&ok), 0, "{ok:?}");
    assert_eq!(read(&p(&dir, "o")), f);
    let bad = lgmc(&["warp", s(&p(&dir, "f")), s(&p(&dir, "small.flo")), "-o", s(&p(&dir, "o"))]);
    assert_eq!(code_of(&bad), 3);
}

#[test]
fn bdrate_identical_and_halved_curves() {
    let dir = TempDir::new().unwrap();
    let anchor = [(0.1, 30.0), (0.2, 33.0), (0.4, 35.5), (0.8, 37.0)];
    let csv = |scale: f64| {
        let mut s = String::from("rate_bpp,quality\n");
        for (r, q) in anchor {
            s += &format!("{},{}\n", r * scale, q);
        }
        s
    };
    std::fs::write(p(&dir, "a.csv"), csv(1.0)).unwrap();
    std::fs::write(p(&dir, "h.csv"), csv(0.5)).unwrap();
    let same = lgmc(&["bdrate", s(&p(&dir, "a.csv")), s(&p(&dir, "a.csv"))]);
    assert_eq!(stdout(&same).trim().parse::<f64>().unwrap(), 0.0);
    let halved = lgmc(&["bdrate", s(&p(&dir, "a.csv")), s(&p(&dir, "h.csv"))]);
    assert!((stdout(&halved).trim().parse::<f64>().unwrap() + 50.0).abs() < 0.01);
}

#[test]
fn gradcheck_passes_and_reports_failure() {
    for kernel in ["softmax", "matmul", "warp", "efficient-attention"] {
        let out = lgmc(&["gradcheck", "--kernel", kernel, "--seeds", "10"]);
        assert_eq!(code_of(&out), 0, "{kernel}: {}", stdout(&out));
        let zero = lgmc(&["gradcheck", "--kernel", kernel, "--seeds", "3", "--zero-upstream"]);
        assert_eq!(code_of(&zero), 0);
    }
    let strict = lgmc(&["gradcheck", "--kernel", "efficient-attention", "--seeds", "5", "--tol", "0"]);
    assert_eq!(code_of(&strict), 1);
    assert!(stdout(&strict).contains("FAIL"));
}

#[test]
fn synthflow_translation_and_blockmatch_recovery() {
    let dir = TempDir::new().unwrap();
    let out = lgmc(&[
        "synthflow", "--motion", "translation", "--width", "10", "--height", "7", "--u", "1.5", "--v", "-2",
        "-o", s(&p(&dir, "t.flo")),
    ]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    let flow = FlowField::read(p(&dir, "t.flo")).unwrap();
    assert_eq!((flow.width(), flow.height()), (10, 7));
    assert!(flow.data().chunks(2).all(|uv| uv == [1.5, -2.0]));

    // current(x, y) = reference(x + 3, y - 2)
    let (w, h) = (48, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let big: Vec<u8> = (0..(w + 16) * (h + 16)).map(|_| rng.gen()).collect();
    let at = |x: usize, y: usize| big[(y + 8) * (w + 16) + x + 8];
    let reference: Vec<u8> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| at(x, y)).collect();
    let current: Vec<u8> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| big[(y + 8 - 2) * (w + 16) + x + 8 + 3])
        .collect();
    for (name, pixels) in [("ref.pgm", reference), ("cur.pgm", current)] {
        Image { width: w, height: h, channels: 1, pixels }.write(p(&dir, name)).unwrap();
    }
    let out = lgmc(&["blockmatch", s(&p(&dir, "ref.pgm")), s(&p(&dir, "cur.pgm")), "--range", "4", "-o", s(&p(&dir, "bm.flo"))]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    let bm = FlowField::read(p(&dir, "bm.flo")).unwrap();
    // interior blocks whose displaced tile stays inside the frame
    for by in 1..h / 8 - 1 {
        for bx in 1..w / 8 - 1 {
            assert_eq!(bm.at(bx * 8, by * 8), (3.0, -2.0), "block ({bx}, {by})");
        }
    }
}

fn write_rgb(path: &Path, w: usize, h: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..w * h * 3).map(|_| rng.gen()).collect();
    Image { width: w, height: h, channels: 3, pixels }.write(path).unwrap();
}

#[test]
fn code_is_deterministic_and_validates_inputs() {
    let dir = TempDir::new().unwrap();
    write_rgb(&p(&dir, "a.ppm"), 20, 12, 1);
    write_rgb(&p(&dir, "b.ppm"), 20, 12, 2);
    write_rgb(&p(&dir, "odd.ppm"), 16, 12, 3);
    let run = |out: &str, mode: &str| {
        lgmc(&[
            "code", "--frame", s(&p(&dir, "a.ppm")), "--frame", s(&p(&dir, "b.ppm")), "--mode", mode,
            "--out-dir", s(&p(&dir, out)), "--channels", "8,8,8", "--hidden", "8", "--latent", "8",
        ])
    };
    for mode in ["both", "local-only", "global-only", "global-enc-only", "global-dec-only"] {
        assert_eq!(code_of(&run("x", mode)), 0, "{mode}");
    }
    assert_eq!(code_of(&run("r1", "both")), 0);
    assert_eq!(code_of(&run("r2", "both")), 0);
    for name in ["recon_0000.ppm", "recon_0001.ppm", "stats.csv"] {
        let a = std::fs::read(p(&dir, "r1").join(name)).unwrap();
        let b = std::fs::read(p(&dir, "r2").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let recon = Image::read(p(&dir, "r1").join("recon_0000.ppm")).unwrap();
    assert_eq!((recon.width, recon.height, recon.channels), (20, 12, 3));
    let stats = std::fs::read_to_string(p(&dir, "r1").join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 3);

    let mixed = lgmc(&["code", "--frame", s(&p(&dir, "a.ppm")), "--frame", s(&p(&dir, "odd.ppm")), "--out-dir", s(&p(&dir, "m"))]);
    assert_eq!(code_of(&mixed), 3);
}

#[test]
fn report_aggregates_bd_table_both_ways() {
    let dir = TempDir::new().unwrap();
    std::fs::write(p(&dir, "bd.csv"), "class,sequence,bd_rate\nA,s1,-10\nA,s2,-20\nA,s3,-30\nB,s4,10\n").unwrap();
    let out = lgmc(&["report", "--bd-table", s(&p(&dir, "bd.csv"))]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("per_sequence_mean -12.5"), "{text}");
    assert!(text.contains("per_class_mean -5"), "{text}");
    assert_eq!(code_of(&lgmc(&["report"])), 2);
}
