use crate::codec::FrameStats;
use crate::error::{Error, Result};

use super::format::{format_sig6, parse_real};

const STATS_HEADER: &str = "frame_index,total_bpp,motion_bpp,mse,psnr";

/// Serializes per-frame records with six significant digits.
pub fn write_stats_csv(stats: &[FrameStats]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for s in stats {
        out += &format!(
            "{},{},{},{},{}\n",
            s.frame_index,
            format_sig6(s.total_bpp),
            format_sig6(s.motion_bpp),
            format_sig6(s.mse),
            format_sig6(s.psnr)
        );
    }
    out
}

pub fn parse_stats_csv(text: &str) -> Result<Vec<FrameStats>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == STATS_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "expected header {STATS_HEADER}, found {other:?}"
            )))
        }
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("stats row needs 5 fields: {line:?}")));
            }
            let frame_index = f[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad frame index {:?}", f[0])))?;
            let stats = FrameStats {
                frame_index,
                total_bpp: parse_real(f[1])?,
                motion_bpp: parse_real(f[2])?,
                mse: parse_real(f[3])?,
                psnr: parse_real(f[4])?,
            };
            if stats.total_bpp < 0.0 || stats.motion_bpp < 0.0 || stats.mse < 0.0 {
                return Err(Error::Domain(format!("negative rate or distortion in {line:?}")));
            }
            Ok(stats)
        })
        .collect()
}

/// Per-frame series with sequence averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BitAllocationReport {
    pub frames: Vec<FrameStats>,
    pub mean_bpp: f64,
    pub mean_motion_bpp: f64,
    pub mean_psnr: f64,
}

pub fn bit_allocation_report(stats: &[FrameStats]) -> Result<BitAllocationReport> {
    if stats.is_empty() {
        return Err(Error::Invalid("bit allocation report needs at least one frame".into()));
    }
    let n = stats.len() as f64;
    let mean = |f: fn(&FrameStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    Ok(BitAllocationReport {
        frames: stats.to_vec(),
        mean_bpp: mean(|s| s.total_bpp),
        mean_motion_bpp: mean(|s| s.motion_bpp),
        mean_psnr: mean(|s| s.psnr),
    })
}

impl BitAllocationReport {
    pub fn to_csv(&self) -> String {
        write_stats_csv(&self.frames)
    }

    /// Whitespace table for gnuplot: a comment header, one row per frame,
    /// then the averages as comments.
    pub fn to_plot_table(&self) -> String {
        let mut out = String::from("# frame total_bpp motion_bpp psnr\n");
        for s in &self.frames {
            out += &format!(
                "{} {} {} {}\n",
                s.frame_index,
                format_sig6(s.total_bpp),
                format_sig6(s.motion_bpp),
                format_sig6(s.psnr)
            );
        }
        out += &format!(
            "# mean_bpp {}\n# mean_motion_bpp {}\n# mean_psnr {}\n",
            format_sig6(self.mean_bpp),
            format_sig6(self.mean_motion_bpp),
            format_sig6(self.mean_psnr)
        );
        out
    }
}

/// Per-frame difference, first report minus second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDelta {
    pub frame_index: usize,
    pub a: FrameStats,
    pub b: FrameStats,
    pub delta_bpp: f64,
    pub delta_motion_bpp: f64,
    pub delta_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportComparison {
    pub frames: Vec<FrameDelta>,
    pub delta_mean_bpp: f64,
    pub delta_mean_motion_bpp: f64,
    pub delta_mean_psnr: f64,
}

/// Aligns two reports by frame index. Both must cover the same frames.
pub fn compare_reports(a: &BitAllocationReport, b: &BitAllocationReport) -> Result<ReportComparison> {
    let same = a.frames.len() == b.frames.len()
        && a.frames.iter().zip(&b.frames).all(|(x, y)| x.frame_index == y.frame_index);
    if !same {
        return Err(Error::Invalid("reports cover different frames".into()));
    }
    let frames = a
        .frames
        .iter()
        .zip(&b.frames)
        .map(|(x, y)| FrameDelta {
            frame_index: x.frame_index,
            a: *x,
            b: *y,
            delta_bpp: x.total_bpp - y.total_bpp,
            delta_motion_bpp: x.motion_bpp - y.motion_bpp,
            delta_psnr: x.psnr - y.psnr,
        })
        .collect();
    Ok(ReportComparison {
        frames,
        delta_mean_bpp: a.mean_bpp - b.mean_bpp,
        delta_mean_motion_bpp: a.mean_motion_bpp - b.mean_motion_bpp,
        delta_mean_psnr: a.mean_psnr - b.mean_psnr,
    })
}

impl ReportComparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "frame_index,a_total_bpp,b_total_bpp,delta_bpp,a_motion_bpp,b_motion_bpp,delta_motion_bpp,a_psnr,b_psnr,delta_psnr\n",
        );
        for d in &self.frames {
            let cells = [
                d.a.total_bpp,
                d.b.total_bpp,
                d.delta_bpp,
                d.a.motion_bpp,
                d.b.motion_bpp,
                d.delta_motion_bpp,
                d.a.psnr,
                d.b.psnr,
                d.delta_psnr,
            ]
            .map(format_sig6);
            out += &format!("{},{}\n", d.frame_index, cells.join(","));
        }
        out
    }
}
