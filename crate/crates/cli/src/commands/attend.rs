use std::path::PathBuf;

use lgmc_core::attention::{
    efficient_cross_attention, materialize_efficient_similarity_capped, vanilla_cross_attention,
    AttentionInputs,
};
use lgmc_core::container::AnyTensor;
use lgmc_core::{Error, Real, Tensor};

use crate::args::{AttendArgs, Variant};
use crate::io::{read_tensor, write_tensor};
use crate::Outcome;

type Grid = Option<(usize, usize)>;

/// Token matrix plus the grid it came from, if any.
fn tokens<T: Real>(t: Tensor<T>) -> anyhow::Result<(Tensor<T>, Grid)> {
    match *t.dims() {
        [_, _] => Ok((t, None)),
        [_, h, w] => Ok((t.to_tokens()?, Some((h, w)))),
        ref d => Err(Error::Shape(format!("attention inputs must be L×C or C×H×W, got {d:?}")).into()),
    }
}

fn attend<T: Real>(
    query: Tensor<T>,
    keyvalue: Tensor<T>,
    args: &AttendArgs,
) -> anyhow::Result<(Tensor<T>, Option<Tensor<T>>)> {
    let (q, grid) = tokens(query)?;
    let (kv, _) = tokens(keyvalue)?;
    let inp = AttentionInputs::new(q, kv)?;
    if args.materialize {
        let entries = inp.query_len().saturating_mul(inp.key_len());
        if entries > args.cap {
            return Err(Error::Resource(format!(
                "similarity matrix {}×{} exceeds the cap of {} entries",
                inp.query_len(),
                inp.key_len(),
                args.cap
            ))
            .into());
        }
    }
    let (out, sim) = match args.variant {
        Variant::Vanilla => {
            let r = vanilla_cross_attention(&inp)?;
            (r.output, args.materialize.then_some(r.similarity))
        }
        Variant::Efficient => {
            let sim = if args.materialize {
                Some(materialize_efficient_similarity_capped(&inp, args.cap)?)
            } else {
                None
            };
            (efficient_cross_attention(&inp)?, sim)
        }
    };
    let out = match grid {
        Some((h, w)) => Tensor::from_tokens(&out, h, w)?,
        None => out,
    };
    Ok((out, sim))
}

pub fn run(args: AttendArgs) -> anyhow::Result<Outcome> {
    let query = read_tensor(&args.query)?;
    let keyvalue = read_tensor(&args.keyvalue)?;
    let (out, sim): (AnyTensor, Option<AnyTensor>) = match (&query, &keyvalue) {
        (AnyTensor::F32(q), AnyTensor::F32(kv)) => {
            let (o, s) = attend(q.clone(), kv.clone(), &args)?;
            (o.into(), s.map(Into::into))
        }
        _ => {
            let (o, s) = attend(query.to_f64()?, keyvalue.to_f64()?, &args)?;
            (o.into(), s.map(Into::into))
        }
    };
    write_tensor(&args.out, out)?;
    if let Some(sim) = sim {
        let path = args.sim_out.clone().unwrap_or_else(|| {
            let mut p = args.out.clone().into_os_string();
            p.push(".sim");
            PathBuf::from(p)
        });
        write_tensor(&path, sim)?;
    }
    Ok(Outcome::Success)
}
