//! Compact textual network notation.
//!
//! Items are comma-separated:
//!
//! - `conv KxK C [stride S] [pad P] [prelu] [xN]` (N cascaded conv layers)
//! - `dense N [prelu] [xN]` (alias `fc`)
//! - `pool` (2×2 max, stride 2), `prelu [shared]`, `flatten`
//!
//! `prelu shared` learns one slope for all channels.
//!
//! `conv 5x5 32 x2 pad 2 prelu` is two 5×5 convolutions with 32 filters, each
//! followed by PReLU.

use lsoftmax::nn::{LayerSpec, NetworkSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Conv {
        kernel: usize,
        filters: usize,
        stride: usize,
        padding: usize,
        prelu: bool,
        repeat: usize,
    },
    Dense {
        outputs: usize,
        prelu: bool,
        repeat: usize,
    },
    Pool,
    Prelu { shared: bool },
    Flatten,
}

fn number(tok: Option<&str>, what: &str, item: &str) -> Result<usize, String> {
    let tok = tok.ok_or_else(|| format!("{item:?}: missing {what}"))?;
    match tok.parse::<usize>() {
        Ok(v) if v > 0 || what == "padding" => Ok(v),
        _ => Err(format!("{item:?}: bad {what} {tok:?}")),
    }
}

fn parse_item(item: &str) -> Result<Item, String> {
    let mut toks = item.split_whitespace();
    let head = toks.next().ok_or("empty layer item")?.to_ascii_lowercase();
    match head.as_str() {
        "conv" => {
            let k = toks.next().ok_or_else(|| format!("{item:?}: missing kernel size"))?;
            let (a, b) = k
                .split_once(['x', '×'])
                .ok_or_else(|| format!("{item:?}: kernel must look like 3x3"))?;
            let kernel = number(Some(a), "kernel", item)?;
            if number(Some(b), "kernel", item)? != kernel {
                return Err(format!("{item:?}: only square kernels are supported"));
            }
            let filters = number(toks.next(), "filter count", item)?;
            let (mut stride, mut padding, mut prelu, mut repeat) = (1, 0, false, 1);
            while let Some(t) = toks.next() {
                match t {
                    "stride" => stride = number(toks.next(), "stride", item)?,
                    "pad" | "padding" => padding = number(toks.next(), "padding", item)?,
                    "prelu" => prelu = true,
                    _ => repeat = repeat_count(t, item)?,
                }
            }
            Ok(Item::Conv {
                kernel,
                filters,
                stride,
                padding,
                prelu,
                repeat,
            })
        }
        "dense" | "fc" => {
            let outputs = number(toks.next(), "width", item)?;
            let (mut prelu, mut repeat) = (false, 1);
            for t in toks {
                match t {
                    "prelu" => prelu = true,
                    _ => repeat = repeat_count(t, item)?,
                }
            }
            Ok(Item::Dense {
                outputs,
                prelu,
                repeat,
            })
        }
        "pool" | "maxpool" => no_args(toks, item, Item::Pool),
        "prelu" => match toks.next() {
            None => Ok(Item::Prelu { shared: false }),
            Some("shared") => no_args(toks, item, Item::Prelu { shared: true }),
            Some(t) => Err(format!("{item:?}: unexpected {t:?}")),
        },
        "flatten" => no_args(toks, item, Item::Flatten),
        other => Err(format!("unknown layer {other:?} in {item:?}")),
    }
}

fn no_args<'a>(mut toks: impl Iterator<Item = &'a str>, item: &str, v: Item) -> Result<Item, String> {
    match toks.next() {
        None => Ok(v),
        Some(t) => Err(format!("{item:?}: unexpected {t:?}")),
    }
}

fn repeat_count(tok: &str, item: &str) -> Result<usize, String> {
    tok.strip_prefix(['x', '×'])
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{item:?}: unexpected {tok:?}"))
}

/// Syntax only; shapes are checked by [`build`].
pub fn parse_items(text: &str) -> Result<Vec<Item>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(|s| parse_item(s.trim())).collect()
}

/// Expand items into layers for a per-sample input shape.
pub fn build(items: &[Item], input_shape: &[usize]) -> Result<Vec<LayerSpec>, String> {
    let mut shape = input_shape.to_vec();
    let mut layers = Vec::new();
    let mut push = |layer: LayerSpec, shape: &mut Vec<usize>| -> Result<(), String> {
        *shape = layer.output_shape(shape).map_err(|e| e.to_string())?;
        layers.push(layer);
        Ok(())
    };
    for item in items {
        match *item {
            Item::Conv {
                kernel,
                filters,
                stride,
                padding,
                prelu,
                repeat,
            } => {
                for _ in 0..repeat {
                    if shape.len() != 3 {
                        return Err(format!("conv needs a [C, H, W] input, got {shape:?}"));
                    }
                    let conv = LayerSpec::Conv2d {
                        in_channels: shape[0],
                        out_channels: filters,
                        kernel,
                        stride,
                        padding,
                    };
                    push(conv, &mut shape)?;
                    if prelu {
                        push(LayerSpec::Prelu { channels: filters }, &mut shape)?;
                    }
                }
            }
            Item::Dense {
                outputs,
                prelu,
                repeat,
            } => {
                for _ in 0..repeat {
                    if shape.len() != 1 {
                        return Err(format!("dense needs a flat input (add `flatten`), got {shape:?}"));
                    }
                    push(
                        LayerSpec::Dense {
                            inputs: shape[0],
                            outputs,
                        },
                        &mut shape,
                    )?;
                    if prelu {
                        push(LayerSpec::Prelu { channels: outputs }, &mut shape)?;
                    }
                }
            }
            Item::Pool => push(LayerSpec::MaxPool2x2, &mut shape)?,
            Item::Prelu { shared } => {
                let channels = *shape.first().ok_or("prelu on a scalar input")?;
                let channels = if shared { 1 } else { channels };
                push(LayerSpec::Prelu { channels }, &mut shape)?
            }
            Item::Flatten => push(LayerSpec::Flatten, &mut shape)?,
        }
    }
    Ok(layers)
}

pub fn parse_layers(text: &str, input_shape: &[usize]) -> Result<Vec<LayerSpec>, String> {
    build(&parse_items(text)?, input_shape)
}

/// Network for `input_shape`, checking the output width against
/// `feature_dim` when that is non-zero.
pub fn network(text: &str, input_shape: &[usize], feature_dim: usize) -> Result<NetworkSpec, String> {
    let layers = parse_layers(text, input_shape)?;
    let spec = NetworkSpec::new(input_shape.to_vec(), layers).map_err(|e| e.to_string())?;
    if feature_dim != 0 && spec.feature_dim().map_err(|e| e.to_string())? != feature_dim {
        return Err(format!(
            "layers produce {:?} features but feature_dim = {feature_dim}",
            spec.output_shape()
        ));
    }
    Ok(spec)
}
