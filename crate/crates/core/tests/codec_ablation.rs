use lgmc_core::codec::{
    code_frame, code_frame_with, code_sequence, contextual_decode, contextual_encode, AblationMode,
    ChannelPlan, CodecConfig, CodecParams, Contexts, Latent,
};
use lgmc_core::metrics::psnr;
use lgmc_core::motion::{local_contexts, FeaturePyramid, FlowField};
use lgmc_core::nn::seeded_rng;
use lgmc_core::{Exec, Tensor};
use rand::Rng;

const H: usize = 64;
const W: usize = 64;

fn config(mode: AblationMode) -> CodecConfig {
    CodecConfig {
        mode,
        channels: ChannelPlan {
            contexts: [8, 12, 16],
            hidden: 16,
            latent: 24,
        },
        seed: 3,
        ..CodecConfig::default()
    }
}

fn image(seed: u64) -> Tensor<f32> {
    let mut rng = seeded_rng(seed);
    Tensor::from_fn(&[3, H, W], |_| rng.gen_range(0.0..1.0)).unwrap()
}

fn perturb(t: &Tensor<f32>, seed: u64) -> Tensor<f32> {
    let mut rng = seeded_rng(seed);
    let noise: Vec<f32> = (0..t.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Tensor::new(t.dims().to_vec(), t.data().iter().zip(&noise).map(|(a, b)| a + b).collect()).unwrap()
}

fn perturb_pyramid(p: &FeaturePyramid<f32>, seed: u64) -> FeaturePyramid<f32> {
    FeaturePyramid {
        levels: [perturb(&p.levels[0], seed), perturb(&p.levels[1], seed + 1), perturb(&p.levels[2], seed + 2)],
    }
}

struct Bundle {
    local: [Tensor<f32>; 3],
    global_enc: FeaturePyramid<f32>,
    global_dec: FeaturePyramid<f32>,
}

fn run(frame: &Tensor<f32>, b: &Bundle, latent: &Latent<f32>, params: &CodecParams<f32>) -> (Tensor<f32>, Tensor<f32>) {
    let enc = Contexts {
        local: Some(&b.local),
        global_source: Some(&b.global_enc),
    };
    let dec = Contexts {
        local: Some(&b.local),
        global_source: Some(&b.global_dec),
    };
    (
        contextual_encode(frame, &enc, params).unwrap(),
        contextual_decode(latent, &dec, params).unwrap(),
    )
}

/// Rows: local, global-encoder, global-decoder. Columns: (encoder changed,
/// decoder changed).
fn sensitivity(mode: AblationMode) -> [(bool, bool); 3] {
    let params = CodecParams::<f32>::new(config(mode), 3).unwrap();
    let frame = image(1);
    let reference = image(2);
    let pyramid = params.pyramid().extract(&reference, Exec::default()).unwrap();
    let flow = FlowField::constant(W, H, 1.5, -0.5).unwrap();
    let base = Bundle {
        local: local_contexts(&pyramid, &flow).unwrap(),
        global_enc: pyramid.clone(),
        global_dec: pyramid,
    };
    let latent = {
        let enc = Contexts {
            local: Some(&base.local),
            global_source: Some(&base.global_enc),
        };
        Latent::from_pre(contextual_encode(&frame, &enc, &params).unwrap()).unwrap()
    };
    let (enc0, dec0) = run(&frame, &base, &latent, &params);

    let variants = [
        Bundle {
            local: [perturb(&base.local[0], 10), perturb(&base.local[1], 11), perturb(&base.local[2], 12)],
            global_enc: base.global_enc.clone(),
            global_dec: base.global_dec.clone(),
        },
        Bundle {
            local: base.local.clone(),
            global_enc: perturb_pyramid(&base.global_enc, 20),
            global_dec: base.global_dec.clone(),
        },
        Bundle {
            local: base.local.clone(),
            global_enc: base.global_enc.clone(),
            global_dec: perturb_pyramid(&base.global_dec, 30),
        },
    ];
    variants.map(|v| {
        let (enc, dec) = run(&frame, &v, &latent, &params);
        (enc != enc0, dec != dec0)
    })
}

#[test]
fn connectivity_matrix_matches_declared_inclusion() {
    for mode in AblationMode::ALL {
        let m = sensitivity(mode);
        let local = mode.local();
        assert_eq!(m[0], (local, local), "{mode}: local family");
        assert_eq!(m[1], (mode.global_encoder(), false), "{mode}: global encoder family");
        assert_eq!(m[2], (false, mode.global_decoder()), "{mode}: global decoder family");
    }
}

#[test]
fn aligned_contexts_beat_misaligned_contexts() {
    let params = CodecParams::<f32>::new(config(AblationMode::LocalOnly), 3).unwrap();
    let frame = image(5);
    let aligned = code_frame(&frame, &frame, &FlowField::zeros(W, H).unwrap(), &params).unwrap();
    let mut rng = seeded_rng(6);
    let wild = FlowField::new(W, H, (0..2 * W * H).map(|_| rng.gen_range(-24.0..24.0)).collect()).unwrap();
    let misaligned = code_frame(&frame, &frame, &wild, &params).unwrap();
    assert!(
        aligned.stats.mse < misaligned.stats.mse,
        "aligned {} vs misaligned {}",
        aligned.stats.mse,
        misaligned.stats.mse
    );
}

#[test]
fn stats_are_consistent_and_runs_deterministic() {
    let params = CodecParams::<f32>::new(config(AblationMode::Both), 3).unwrap();
    let (frame, reference) = (image(7), image(8));
    let flow = FlowField::constant(W, H, 0.25, 2.0).unwrap();
    let a = code_frame(&frame, &reference, &flow, &params).unwrap();
    let b = code_frame_with(&frame, &reference, &flow, &params, Exec::Sequential).unwrap();
    assert_eq!(a.reconstruction, b.reconstruction);
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.stats.psnr, psnr(&frame, &a.reconstruction, 1.0).unwrap());
    assert_eq!(a.stats.total_bpp, a.bits / (H * W) as f64);
    assert_eq!(a.stats.motion_bpp, 0.0);
    assert!(a.stats.total_bpp > 0.0);
    assert_eq!(a.latent.quantized.dims(), &[24, 4, 4]);
    assert!(a.latent.quantized.data().iter().all(|v| v.fract() == 0.0));
}

#[test]
fn default_plan_shapes() {
    let params = CodecParams::<f32>::new(CodecConfig::default(), 3).unwrap();
    let frame = image(9);
    let coded = code_frame(&frame, &frame, &FlowField::zeros(W, H).unwrap(), &params).unwrap();
    assert_eq!(coded.latent.pre.dims(), &[96, 4, 4]);
    assert_eq!(coded.reconstruction.dims(), &[3, 64, 64]);
}

#[test]
fn sequence_uses_previous_reconstruction_between_restarts() {
    let params = CodecParams::<f32>::new(config(AblationMode::LocalOnly), 3).unwrap();
    let frames: Vec<Tensor<f32>> = (0..4).map(|i| image(20 + i)).collect();
    let reference = image(19);
    let flows = [FlowField::zeros(W, H).unwrap()];
    let coded = code_sequence(&frames, &reference, &flows, 2, &params).unwrap();
    assert_eq!(coded.iter().map(|c| c.stats.frame_index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    let manual1 = code_frame(&frames[1], &coded[0].reconstruction, &flows[0], &params).unwrap();
    assert_eq!(manual1.reconstruction, coded[1].reconstruction);
    let manual2 = code_frame(&frames[2], &reference, &flows[0], &params).unwrap();
    assert_eq!(manual2.reconstruction, coded[2].reconstruction);
    assert!(code_sequence(&frames, &reference, &[], 2, &params).is_err());
}
