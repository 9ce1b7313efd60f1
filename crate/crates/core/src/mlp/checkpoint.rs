//! Plain-text network checkpoints.
//!
//! ```text
//! network v1
//! widths 4 10 10 2
//! activations tanh tanh identity
//! layer 0
//! w <fan_in values>        (fan_out rows, row-major)
//! b <fan_out values>
//! layer 1
//! ...
//! end network
//! ```
//!
//! Values are written in Rust's shortest round-trip decimal form, so a
//! checkpoint reloads bit-identically.

use std::fmt::Write as _;
use std::path::Path;

use super::{Activation, DenseLayer, Network, NetworkSpec, ParameterSet};
use crate::error::{Error, Result};

pub const NETWORK_HEADER: &str = "network v1";

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

pub fn write_network(net: &Network, out: &mut String) {
    out.push_str(NETWORK_HEADER);
    out.push('\n');
    let widths: Vec<String> = net.spec().widths().iter().map(|w| w.to_string()).collect();
    writeln!(out, "widths {}", widths.join(" ")).unwrap();
    let acts: Vec<&str> = net.spec().activations().iter().map(|a| a.name()).collect();
    writeln!(out, "activations {}", acts.join(" ")).unwrap();
    for (l, layer) in net.params().layers.iter().enumerate() {
        writeln!(out, "layer {l}").unwrap();
        for i in 0..layer.fan_out {
            writeln!(out, "w {}", join(layer.weight_row(i))).unwrap();
        }
        writeln!(out, "b {}", join(&layer.bias)).unwrap();
    }
    out.push_str("end network\n");
}

/// Line cursor shared by the checkpoint readers.
pub(crate) struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    kind: &'static str,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str, path: &'a Path, kind: &'static str) -> Self {
        LineReader {
            lines: text.lines().enumerate(),
            path,
            kind,
            line_no: 0,
        }
    }

    pub fn error(&self, detail: impl std::fmt::Display) -> Error {
        Error::format(self.kind, self.path, format!("line {}: {detail}", self.line_no))
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        loop {
            match self.lines.next() {
                Some((i, line)) => {
                    self.line_no = i + 1;
                    let t = line.trim();
                    if !t.is_empty() {
                        return Ok(t);
                    }
                }
                None => return Err(self.error("unexpected end of file")),
            }
        }
    }

    /// Next line must start with `key`; returns the remainder.
    pub fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.strip_prefix(key) {
            Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok(rest.trim()),
            _ => Err(self.error(format!("expected `{key}`, found `{line}`"))),
        }
    }

    pub fn expect(&mut self, exact: &str) -> Result<()> {
        let line = self.next_line()?;
        if line == exact {
            Ok(())
        } else {
            Err(self.error(format!("expected `{exact}`, found `{line}`")))
        }
    }

    pub fn floats(&self, s: &str, n: usize) -> Result<Vec<f64>> {
        let v: std::result::Result<Vec<f64>, _> = s.split_whitespace().map(str::parse).collect();
        let v = v.map_err(|e| self.error(e))?;
        if v.len() != n {
            return Err(self.error(format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }

    pub fn usizes(&self, s: &str) -> Result<Vec<usize>> {
        s.split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| self.error(e)))
            .collect()
    }
}

pub(crate) fn parse_network(r: &mut LineReader<'_>) -> Result<Network> {
    r.expect(NETWORK_HEADER)?;
    let line = r.keyed("widths")?;
    let widths = r.usizes(line)?;
    let acts_line = r.keyed("activations")?;
    let activations: Vec<Activation> = acts_line
        .split_whitespace()
        .map(|a| Activation::parse(a).ok_or_else(|| r.error(format!("unknown activation `{a}`"))))
        .collect::<Result<_>>()?;
    let spec = NetworkSpec::new(widths, activations).map_err(|e| r.error(e))?;
    let mut layers = Vec::with_capacity(spec.num_layers());
    for (l, w) in spec.widths().windows(2).enumerate() {
        r.expect(&format!("layer {l}"))?;
        let mut layer = DenseLayer::zeros(w[0], w[1]);
        for i in 0..w[1] {
            let line = r.keyed("w")?;
            let row = r.floats(line, w[0])?;
            layer.weight[i * w[0]..(i + 1) * w[0]].copy_from_slice(&row);
        }
        let line = r.keyed("b")?;
        layer.bias = r.floats(line, w[1])?;
        layers.push(layer);
    }
    r.expect("end network")?;
    Network::new(spec, ParameterSet { layers }).map_err(|e| r.error(e))
}

pub fn read_network(text: &str, path: &Path) -> Result<Network> {
    let mut r = LineReader::new(text, path, "network checkpoint");
    parse_network(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(seed in 0u64..1000, hidden in 1usize..6, layers in 1usize..4) {
            let spec = NetworkSpec::mlp(3, hidden, 2, layers, layers.saturating_sub(1)).unwrap();
            let net = Network::init(spec, seed);
            let mut text = String::new();
            write_network(&net, &mut text);
            let back = read_network(&text, Path::new("mem")).unwrap();
            prop_assert_eq!(back.params().fingerprint(), net.params().fingerprint());
            prop_assert_eq!(back.spec(), net.spec());
        }
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let net = Network::init(NetworkSpec::mlp(2, 3, 1, 2, 1).unwrap(), 0);
        let mut text = String::new();
        write_network(&net, &mut text);
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            read_network(cut, Path::new("mem")),
            Err(Error::Format { .. })
        ));
    }
}
