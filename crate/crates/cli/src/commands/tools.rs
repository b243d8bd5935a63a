use anyhow::Context;
use lgmc_core::container::AnyTensor;
use lgmc_core::metrics::{
    aggregate_bd_rates, bd_rate, bit_allocation_report, compare_reports, format_sig6, parse_rd_csv,
    parse_real, parse_stats_csv, BdEntry,
};
use lgmc_core::motion::{bilinear_warp, block_match, synth_flow, FlowField, SynthMotion};
use lgmc_core::Error;

use crate::args::{BdrateArgs, BlockmatchArgs, MotionKind, ReportArgs, SynthflowArgs, WarpArgs};
use crate::io::{read_gray, read_tensor, read_text, write_tensor, write_text};
use crate::Outcome;

pub fn warp(args: WarpArgs) -> anyhow::Result<Outcome> {
    let feature = read_tensor(&args.feature)?;
    let flow = FlowField::read(&args.flow).with_context(|| format!("reading flow {}", args.flow.display()))?;
    let out: AnyTensor = match feature {
        AnyTensor::F32(f) => bilinear_warp(&f, &flow)?.into(),
        AnyTensor::F64(f) => bilinear_warp(&f, &flow)?.into(),
    };
    write_tensor(&args.out, out)?;
    Ok(Outcome::Success)
}

pub fn bdrate(args: BdrateArgs) -> anyhow::Result<Outcome> {
    let anchor = parse_rd_csv(&read_text(&args.anchor)?).with_context(|| format!("parsing {}", args.anchor.display()))?;
    let test = parse_rd_csv(&read_text(&args.test)?).with_context(|| format!("parsing {}", args.test.display()))?;
    println!("{}", format_sig6(bd_rate(&anchor, &test)?));
    Ok(Outcome::Success)
}

pub fn synthflow(args: SynthflowArgs) -> anyhow::Result<Outcome> {
    let motion = match args.motion {
        MotionKind::Translation => SynthMotion::Translation { u: args.u, v: args.v },
        MotionKind::Rotation => SynthMotion::Rotation { theta: args.theta },
        MotionKind::Zoom => SynthMotion::Zoom { scale: args.scale },
    };
    synth_flow(motion, args.width, args.height)?.write(&args.out)?;
    Ok(Outcome::Success)
}

pub fn blockmatch(args: BlockmatchArgs) -> anyhow::Result<Outcome> {
    let reference = read_gray(&args.reference)?;
    let current = read_gray(&args.current)?;
    block_match(&reference, &current, args.block, args.range)?.write(&args.out)?;
    Ok(Outcome::Success)
}

fn parse_bd_table(text: &str) -> lgmc_core::Result<Vec<BdEntry>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some("class,sequence,bd_rate") => {}
        other => return Err(Error::Format(format!("expected header class,sequence,bd_rate, got {other:?}"))),
    }
    lines
        .map(|line| match line.split(',').collect::<Vec<_>>()[..] {
            [class, sequence, rate] => Ok(BdEntry {
                class: class.to_string(),
                sequence: sequence.to_string(),
                bd_rate: parse_real(rate)?,
            }),
            _ => Err(Error::Format(format!("malformed row {line:?}"))),
        })
        .collect()
}

pub fn report(args: ReportArgs) -> anyhow::Result<Outcome> {
    if let Some(path) = &args.stats {
        let stats = parse_stats_csv(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let report = bit_allocation_report(&stats)?;
        let csv = match &args.compare {
            Some(other) => {
                let b = parse_stats_csv(&read_text(other)?).with_context(|| format!("parsing {}", other.display()))?;
                let cmp = compare_reports(&report, &bit_allocation_report(&b)?)?;
                println!(
                    "delta_mean_bpp {} delta_mean_motion_bpp {} delta_mean_psnr {}",
                    format_sig6(cmp.delta_mean_bpp),
                    format_sig6(cmp.delta_mean_motion_bpp),
                    format_sig6(cmp.delta_mean_psnr)
                );
                cmp.to_csv()
            }
            None => report.to_csv(),
        };
        println!(
            "frames {} mean_bpp {} mean_motion_bpp {} mean_psnr {}",
            report.frames.len(),
            format_sig6(report.mean_bpp),
            format_sig6(report.mean_motion_bpp),
            format_sig6(report.mean_psnr)
        );
        if let Some(out) = &args.out {
            write_text(out, &csv)?;
        }
        if let Some(plot) = &args.plot {
            write_text(plot, &report.to_plot_table())?;
        }
    }
    if let Some(path) = &args.bd_table {
        let entries = parse_bd_table(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let agg = aggregate_bd_rates(&entries)?;
        for (class, mean) in &agg.class_means {
            println!("class {class} mean_bd_rate {}", format_sig6(*mean));
        }
        println!("per_sequence_mean {}", format_sig6(agg.per_sequence_mean));
        println!("per_class_mean {}", format_sig6(agg.per_class_mean));
    }
    Ok(Outcome::Success)
}
