//! Parameter directories: one TSR1 file per tensor plus a `manifest.txt`
//! listing the layer order.
//!
//! ```text
//! stream<TAB>spatial
//! classes<TAB>4
//! input<TAB>16<TAB>16
//! layer<TAB>0<TAB>conv 3 8 3 1 0<TAB>layer00.weights.tsr<TAB>layer00.bias.tsr
//! layer<TAB>1<TAB>relu
//! ```

use std::fs;
use std::path::Path;

use super::{LayerDesc, LayerLayout, LayerParams, Model, Params, Stream};
use crate::error::{Error, Result};
use crate::tsr::{self, Dtype};

pub const MANIFEST: &str = "manifest.txt";

pub fn save_checkpoint(model: &Model, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut text = format!(
        "stream\t{}\nclasses\t{}\ninput\t{}\t{}\n",
        model.stream, model.num_classes, model.input_hw.0, model.input_hw.1
    );
    for (i, (desc, p)) in model.layout.layers.iter().zip(&model.params.layers).enumerate() {
        text.push_str(&format!("layer\t{i}\t{desc}"));
        if let Some(p) = p {
            let wname = format!("layer{i:02}.weights.tsr");
            let bname = format!("layer{i:02}.bias.tsr");
            tsr::write(dir.join(&wname), &p.weights, Dtype::F64)?;
            tsr::write(dir.join(&bname), &p.bias, Dtype::F64)?;
            text.push_str(&format!("\t{wname}\t{bname}"));
        }
        text.push('\n');
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Model> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |line: usize, reason: &str| Error::Manifest {
        line,
        reason: format!("{}: {reason}", path.display()),
    };
    let mut stream = None;
    let mut classes = None;
    let mut input = None;
    let mut layers = Vec::new();
    let mut params = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["stream", s] => stream = Some(s.parse::<Stream>().map_err(|_| bad(lineno, "bad stream"))?),
            ["classes", c] => classes = Some(c.parse::<usize>().map_err(|_| bad(lineno, "bad class count"))?),
            ["input", h, w] => {
                let h = h.parse().map_err(|_| bad(lineno, "bad input height"))?;
                let w = w.parse().map_err(|_| bad(lineno, "bad input width"))?;
                input = Some((h, w));
            }
            ["layer", idx, desc, rest @ ..] => {
                if idx.parse::<usize>().ok() != Some(layers.len()) {
                    return Err(bad(lineno, "layer indices out of order"));
                }
                let desc: LayerDesc = desc.parse().map_err(|_| bad(lineno, "bad layer descriptor"))?;
                let p = match (desc.has_params(), rest) {
                    (false, []) => None,
                    (true, [wf, bf]) => Some(LayerParams {
                        weights: tsr::read(dir.join(wf))?.0,
                        bias: tsr::read(dir.join(bf))?.0,
                    }),
                    _ => return Err(bad(lineno, "parameter file list does not match layer kind")),
                };
                layers.push(desc);
                params.push(p);
            }
            [""] => {}
            _ => return Err(bad(lineno, "unrecognized record")),
        }
    }
    let (Some(stream), Some(classes), Some(input)) = (stream, classes, input) else {
        return Err(bad(0, "missing stream, classes or input header"));
    };
    Model::from_parts(stream, classes, input, LayerLayout::new(layers), Params { layers: params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_toy_model, ModelConfig};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_toy_model(&ModelConfig::toy(Stream::Temporal, 4, (16, 16), 10, 5).unwrap()).unwrap();
        save_checkpoint(&m, dir.path()).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap(), m);
    }

    #[test]
    fn missing_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
        fs::write(dir.path().join(MANIFEST), "stream\tspatial\nbogus\n").unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Manifest { line: 2, .. })));
    }
}
