use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{EncoderParams, SIDES};
use crate::error::Result;
use crate::tensor::{Graph, Real};

/// Cross-attention probabilities of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    pub window_len: usize,
    pub n_heads: usize,
    /// Indexed `[layer][side]`, each `[heads, T, T]` row-major.
    pub maps: Vec<[Vec<f64>; 2]>,
}

impl AttentionMaps {
    /// Row `t` of the map for `(layer, side, head)`.
    pub fn row(&self, layer: usize, side: usize, head: usize, t: usize) -> &[f64] {
        let n = self.window_len;
        let start = (head * n + t) * n;
        &self.maps[layer][side][start..start + n]
    }

    pub fn file_name(layer: usize, side: usize, head: usize) -> String {
        format!("cross_attn_layer{layer}_{}_head{head}.csv", SIDES[side])
    }

    /// One CSV per layer, stream and head, each `T` rows of `T` values.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let n = self.window_len;
        let mut paths = Vec::new();
        for (l, sides) in self.maps.iter().enumerate() {
            for (s, probs) in sides.iter().enumerate() {
                for h in 0..self.n_heads {
                    let path = dir.join(Self::file_name(l, s, h));
                    let mut w = BufWriter::new(fs::File::create(&path)?);
                    for t in 0..n {
                        let row = &probs[(h * n + t) * n..(h * n + t + 1) * n];
                        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                        writeln!(w, "{}", line.join(","))?;
                    }
                    w.flush()?;
                    paths.push(path);
                }
            }
        }
        Ok(paths)
    }
}

/// Eval-mode cross-attention maps for one window.
pub fn export_attention<T: Real>(model: &EncoderParams<T>, left: &[f32], right: &[f32]) -> Result<AttentionMaps> {
    let mut g = Graph::new(false, 0);
    let (_, cross) = model.encode_graph(&mut g, left, right)?;
    let to_f64 = |id| -> Vec<f64> {
        g.attention_probs(id)
            .expect("attention node")
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect()
    };
    let maps = cross.iter().map(|[l, r]| [to_f64(*l), to_f64(*r)]).collect();
    Ok(AttentionMaps { window_len: model.config.window_len, n_heads: model.config.n_heads, maps })
}
