use lgmc_core::bench::{run_attention_scaling_with, run_channel_sweep_with, BenchConfig, WallClock};
use lgmc_core::metrics::format_sig6;

use crate::args::BenchArgs;
use crate::io::write_text;
use crate::Outcome;

pub fn run(args: BenchArgs) -> anyhow::Result<Outcome> {
    let config = BenchConfig {
        ls: args.ls.clone(),
        channels: args.channels,
        reps: args.reps,
        warmup: args.warmup,
        mem_budget: args.mem_budget,
        seed: args.seed,
        single_thread: !args.parallel,
    };
    let mut report = run_attention_scaling_with(&config, &mut WallClock)?;
    if let Some(cs) = &args.channel_sweep {
        let sweep = run_channel_sweep_with(args.sweep_l, cs, &config, &mut WallClock)?;
        report.samples.extend(sweep.samples);
        report.fits.extend(sweep.fits);
    }
    write_text(&args.out, &report.to_csv())?;
    write_text(&args.summary, &report.summary_json()?)?;

    for s in &report.skipped {
        println!(
            "skipped {} L={} (needs {} bytes, budget {})",
            s.kernel, s.l, s.required_bytes, s.budget_bytes
        );
    }
    for f in &report.fits {
        println!(
            "{} slope vs {} = {} (r² {}){}",
            f.kernel,
            f.axis,
            format_sig6(f.fit.slope),
            format_sig6(f.fit.r_squared),
            if f.noisy { " noisy" } else { "" }
        );
    }
    if report.fits.is_empty() {
        println!("multi-threaded run: slopes not fitted");
    }
    Ok(Outcome::Success)
}
