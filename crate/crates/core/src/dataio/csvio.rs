use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::SkeletonSequence;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Render in the sequence CSV format: a `frames,joints,dims` line, then one
/// `frame,joint,x,y,z` line per joint, frames-major.
///
/// Floats use the shortest representation that parses back to the same bits.
pub fn format_sequence(seq: &SkeletonSequence) -> String {
    let (f, n) = (seq.frames(), seq.joints());
    let mut out = String::with_capacity(f * n * 64);
    writeln!(out, "{f},{n},3").unwrap();
    for fi in 0..f {
        for j in 0..n {
            let [x, y, z] = seq.joint(fi, j);
            writeln!(out, "{fi},{j},{x:?},{y:?},{z:?}").unwrap();
        }
    }
    out
}

pub fn write_sequence(path: &Path, seq: &SkeletonSequence) -> Result<()> {
    fs::write(path, format_sequence(seq)).map_err(|e| Error::io(path, e))
}

/// Parse sequence CSV text; `origin` names the source in error messages.
/// The returned sequence has an empty subject and label 0; the manifest
/// supplies both.
pub fn parse_sequence(text: &str, origin: &str) -> Result<SkeletonSequence> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|c| c.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(1, format!("header must be `frames,joints,dims`, got {header:?}")))?;
    let &[frames, joints, d] = dims.as_slice() else {
        return Err(err(1, format!("header must have 3 fields, got {}", dims.len())));
    };
    if d != 3 {
        return Err(err(1, format!("dims must be 3, got {d}")));
    }
    if frames < 2 || joints < 2 {
        return Err(err(1, format!("need at least 2 frames and 2 joints, got {frames} x {joints}")));
    }

    let total = frames * joints;
    let mut data = Vec::with_capacity(total * 3);
    let mut next = 0usize;
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(err(ln, format!("expected 5 fields, got {}", cells.len())));
        }
        let idx = |k: usize, what: &str| {
            cells[k]
                .trim()
                .parse::<usize>()
                .map_err(|_| err(ln, format!("{what} index {:?} is not a non-negative integer", cells[k])))
        };
        let (fi, j) = (idx(0, "frame")?, idx(1, "joint")?);
        if next >= total {
            return Err(err(ln, format!("extra row for frame {fi} joint {j} beyond {frames} x {joints}")));
        }
        let (ef, ej) = (next / joints, next % joints);
        if (fi, j) != (ef, ej) {
            let msg = if fi >= frames || j >= joints {
                format!("index frame {fi} joint {j} out of range for {frames} x {joints}")
            } else {
                format!("missing row for frame {ef} joint {ej} (found frame {fi} joint {j})")
            };
            return Err(err(ln, msg));
        }
        for k in 2..5 {
            let v: f64 = cells[k]
                .trim()
                .parse()
                .map_err(|_| err(ln, format!("non-numeric coordinate {:?}", cells[k])))?;
            if !v.is_finite() {
                return Err(err(ln, format!("non-finite coordinate {:?}", cells[k])));
            }
            data.push(v);
        }
        next += 1;
    }
    if next < total {
        let last = text.lines().count();
        return Err(err(
            last,
            format!("missing row for frame {} joint {}", next / joints, next % joints),
        ));
    }
    SkeletonSequence::new(Tensor::new(&[frames, joints, 3], data)?, "", 0)
}

pub fn read_sequence(path: &Path) -> Result<SkeletonSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence(&text, &path.display().to_string())
}
