use anyhow::Context;
use lgmc_core::codec::{code_sequence, AblationMode, CodecConfig, CodecParams, FrameStats};
use lgmc_core::frames::{crop, pad_flow_to_multiple, pad_to_multiple, Image};
use lgmc_core::metrics::{bit_allocation_report, format_sig6, mse, psnr_from_mse, rd_loss, write_stats_csv};
use lgmc_core::motion::FlowField;
use lgmc_core::{Error, Tensor};

use crate::args::{CodeArgs, Mode};
use crate::io::{read_tensor, write_text};
use crate::Outcome;

/// Frames are padded to multiples of this before coding.
const PAD: usize = 64;

impl From<Mode> for AblationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Both => AblationMode::Both,
            Mode::LocalOnly => AblationMode::LocalOnly,
            Mode::GlobalOnly => AblationMode::GlobalOnly,
            Mode::GlobalEncOnly => AblationMode::GlobalEncOnly,
            Mode::GlobalDecOnly => AblationMode::GlobalDecOnly,
        }
    }
}

fn config(args: &CodeArgs) -> anyhow::Result<CodecConfig> {
    let mut config = CodecConfig {
        lambda: args.lambda,
        mode: args.mode.into(),
        seed: args.seed,
        sigma: args.sigma,
        ..CodecConfig::default()
    };
    if let Some(c) = &args.channels {
        config.channels.contexts = match c[..] {
            [a, b, c] => [a, b, c],
            _ => return Err(Error::Invalid(format!("--channels takes three widths, got {}", c.len())).into()),
        };
    }
    if let Some(h) = args.hidden {
        config.channels.hidden = h;
    }
    if let Some(l) = args.latent {
        config.channels.latent = l;
    }
    Ok(config)
}

pub fn run(args: CodeArgs) -> anyhow::Result<Outcome> {
    let config = config(&args)?;
    config.validate()?;

    let mut frames = Vec::with_capacity(args.frames.len());
    for path in &args.frames {
        let img = Image::read(path).with_context(|| format!("reading frame {}", path.display()))?;
        if img.channels != 3 {
            return Err(Error::Shape(format!("{}: frames must be RGB (P6)", path.display())).into());
        }
        frames.push(img.to_tensor::<f32>()?);
    }
    let (_, h, w) = frames[0].chw()?;
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != frames[0].dims()) {
        return Err(Error::Shape(format!("frame {i} is {:?}, frame 0 is {:?}", f.dims(), frames[0].dims())).into());
    }

    let reference: Tensor<f32> = match &args.reference {
        Some(p) => read_tensor(p)?.to_f32()?,
        None => frames[0].clone(),
    };
    let (ref_channels, rh, rw) = reference.chw()?;
    if (rh, rw) != (h, w) {
        return Err(Error::Shape(format!("reference is {rh}×{rw}, frames are {h}×{w}")).into());
    }

    let flows = if args.flows.is_empty() {
        vec![FlowField::zeros(w, h)?]
    } else {
        let mut flows = Vec::with_capacity(args.flows.len());
        for p in &args.flows {
            let f = FlowField::read(p).with_context(|| format!("reading flow {}", p.display()))?;
            if (f.width(), f.height()) != (w, h) {
                return Err(Error::Shape(format!(
                    "{}: flow is {}×{}, frames are {w}×{h}",
                    p.display(),
                    f.width(),
                    f.height()
                ))
                .into());
            }
            flows.push(f);
        }
        flows
    };

    let padded: Vec<Tensor<f32>> = frames.iter().map(|f| pad_to_multiple(f, PAD)).collect::<Result<_, _>>()?;
    let padded_flows: Vec<FlowField> = flows.iter().map(|f| pad_flow_to_multiple(f, PAD)).collect::<Result<_, _>>()?;
    let params = CodecParams::<f32>::new(config, ref_channels)?;
    let coded = code_sequence(&padded, &pad_to_multiple(&reference, PAD)?, &padded_flows, args.intra_period, &params)?;

    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let pixels = (h * w) as f64;
    let mut stats = Vec::with_capacity(coded.len());
    for (t, (c, frame)) in coded.iter().zip(&frames).enumerate() {
        let recon = crop(&c.reconstruction, h, w)?;
        let distortion = mse(frame, &recon)?;
        stats.push(FrameStats {
            frame_index: t,
            total_bpp: c.bits / pixels,
            motion_bpp: 0.0,
            mse: distortion,
            psnr: psnr_from_mse(distortion, 1.0),
        });
        Image::from_tensor(&recon)?.write(args.out_dir.join(format!("recon_{t:04}.ppm")))?;
    }
    let stats_path = args.stats.clone().unwrap_or_else(|| args.out_dir.join("stats.csv"));
    write_text(&stats_path, &write_stats_csv(&stats))?;

    let report = bit_allocation_report(&stats)?;
    let mean_loss = stats.iter().map(|s| rd_loss(s.total_bpp, s.mse, args.lambda)).sum::<f64>() / stats.len() as f64;
    println!(
        "frames {} mode {} mean_bpp {} mean_psnr {} mean_rd_loss {}",
        stats.len(),
        params.mode(),
        format_sig6(report.mean_bpp),
        format_sig6(report.mean_psnr),
        format_sig6(mean_loss)
    );
    Ok(Outcome::Success)
}
