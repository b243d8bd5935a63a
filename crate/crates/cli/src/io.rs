use std::path::Path;

use anyhow::Context;
use lgmc_core::container::{self, AnyTensor};
use lgmc_core::frames::Image;
use lgmc_core::{Error, Tensor};

pub fn read_tensor(path: &Path) -> anyhow::Result<AnyTensor> {
    container::read_file(path).with_context(|| format!("reading tensor {}", path.display()))
}

pub fn write_tensor(path: &Path, t: impl Into<AnyTensor>) -> anyhow::Result<()> {
    let bytes = t.into().encode()?;
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Loads a single-channel frame from a netpbm image (RGB is averaged) or a
/// 1×H×W tensor container.
pub fn read_gray(path: &Path) -> anyhow::Result<Tensor<f32>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let t = if bytes.starts_with(container::MAGIC) {
        container::decode(&bytes)?.to_f32()?
    } else {
        let img = Image::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        let rgb = img.to_tensor::<f32>()?;
        let (c, h, w) = rgb.chw()?;
        let plane = h * w;
        Tensor::from_fn(&[1, h, w], |i| {
            (0..c).map(|ch| rgb.data()[ch * plane + i]).sum::<f32>() / c as f32
        })?
    };
    match t.dims() {
        [1, _, _] => Ok(t),
        d => Err(Error::Shape(format!("{}: expected a 1×H×W frame, got {d:?}", path.display())).into()),
    }
}
