//! Plain-text model checkpoints.
//!
//! ```text
//! leoshot-model v1
//! input_width <n>
//! class_count <n>
//! layer <width> <relu|identity> <bn|->      (one line per layer)
//! trainable <count>
//! <value>                                   (count lines)
//! running <count>
//! <value>                                   (count lines)
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load cycle is bit-exact.
//! Value order is that of [`ModelParams::trainable_flat`] and [`ModelParams::running_flat`].

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, ModelParams, ModelSpec};

const HEADER: &str = "leoshot-model v1";

pub fn to_string(model: &ModelParams) -> String {
    let spec = model.spec();
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "input_width {}", spec.input_width).unwrap();
    writeln!(out, "class_count {}", spec.class_count).unwrap();
    for l in &spec.layers {
        let bn = if l.batch_norm { "bn" } else { "-" };
        writeln!(out, "layer {} {} {bn}", l.width, l.activation.name()).unwrap();
    }
    for (name, values) in [("trainable", model.trainable_flat()), ("running", model.running_flat())] {
        writeln!(out, "{name} {}", values.len()).unwrap();
        for v in values {
            writeln!(out, "{v:?}").unwrap();
        }
    }
    out
}

fn bad(line: usize, msg: &str) -> Error {
    Error::Checkpoint(format!("line {}: {msg}", line + 1))
}

pub fn from_str(text: &str) -> Result<ModelParams> {
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = 0;
    let next = |pos: &mut usize| -> Result<(usize, &str)> {
        let i = *pos;
        *pos += 1;
        lines.get(i).map(|l| (i, l.trim())).ok_or_else(|| bad(i, "unexpected end of file"))
    };
    let keyed = |(i, line): (usize, &str), key: &str| -> Result<usize> {
        line.strip_prefix(key)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| bad(i, &format!("expected `{key} <n>`")))
    };

    let (i, header) = next(&mut pos)?;
    if header != HEADER {
        return Err(bad(i, "not a leoshot model checkpoint"));
    }
    let input_width = keyed(next(&mut pos)?, "input_width")?;
    let class_count = keyed(next(&mut pos)?, "class_count")?;
    let mut layers = Vec::new();
    let trainable_count = loop {
        let (i, line) = next(&mut pos)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["layer", width, act, bn] => layers.push(LayerSpec {
                width: width.parse().map_err(|_| bad(i, "bad layer width"))?,
                activation: Activation::parse(act).ok_or_else(|| bad(i, "bad activation"))?,
                batch_norm: match *bn {
                    "bn" => true,
                    "-" => false,
                    _ => return Err(bad(i, "bad batch-norm flag")),
                },
            }),
            _ => break keyed((i, line), "trainable")?,
        }
    };
    let read_values = |count: usize, pos: &mut usize| -> Result<Vec<f64>> {
        (0..count)
            .map(|_| {
                let (i, line) = next(pos)?;
                line.parse::<f64>().map_err(|_| bad(i, "bad number"))
            })
            .collect()
    };
    let trainable = read_values(trainable_count, &mut pos)?;
    let running_count = keyed(next(&mut pos)?, "running")?;
    let running = read_values(running_count, &mut pos)?;

    let spec = ModelSpec {
        input_width,
        layers,
        class_count,
    };
    // Shapes come from the spec; values are overwritten below.
    let mut model = ModelParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
    model.set_trainable_flat(&trainable)?;
    model.set_running_flat(&running)?;
    Ok(model)
}

pub fn save(model: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams> {
    from_str(&std::fs::read_to_string(path)?)
}
