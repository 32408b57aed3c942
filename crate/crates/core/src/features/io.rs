//! Plain-text feature exchange format.
//!
//! ```text
//! FEATURES 1 d=<dim> width=<w> height=<h> count=<n> depths=<0|1>
//! <u> <v> <score> [<depth>] <f_1> ... <f_dim>
//! ...
//! ```
//!
//! One keypoint per line, space separated. Floats are written in Rust's
//! shortest round-trip form, so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::Vector2;
use thiserror::Error;

use super::{FeatureError, FeatureSet, Keypoint};

pub const FEATURES_VERSION: u32 = 1;
const MAGIC: &str = "FEATURES";

#[derive(Debug, Error)]
pub enum FeatureIoError {
    #[error("line {line}, {field}: {message}")]
    ParseError {
        line: usize,
        field: String,
        message: String,
    },
    #[error("feature file version {found}, expected {FEATURES_VERSION}")]
    SchemaVersionMismatch { found: String },
    #[error("invalid feature set: {0}")]
    Invalid(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, field: impl Into<String>, message: impl Into<String>) -> FeatureIoError {
    FeatureIoError::ParseError {
        line,
        field: field.into(),
        message: message.into(),
    }
}

pub fn write_features<W: Write>(fs: &FeatureSet, mut sink: W) -> Result<(), FeatureIoError> {
    let dim = fs.descriptor_dim().unwrap_or(0);
    let has_depths = fs.depths().is_some();
    writeln!(
        sink,
        "{MAGIC} {FEATURES_VERSION} d={dim} width={} height={} count={} depths={}",
        fs.width(),
        fs.height(),
        fs.len(),
        u8::from(has_depths)
    )?;
    let mut line = String::new();
    for (i, kp) in fs.keypoints().iter().enumerate() {
        line.clear();
        write!(line, "{} {} {}", kp.pixel.x, kp.pixel.y, kp.score).unwrap();
        if let Some(d) = fs.depths() {
            write!(line, " {}", d[i]).unwrap();
        }
        for c in &kp.descriptor {
            write!(line, " {c}").unwrap();
        }
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

struct Header {
    dim: usize,
    width: u32,
    height: u32,
    count: usize,
    depths: bool,
}

fn parse_header(text: &str) -> Result<Header, FeatureIoError> {
    let mut tokens = text.split_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(parse_err(1, "magic", format!("expected {MAGIC:?}")));
    }
    let version = tokens.next().ok_or_else(|| parse_err(1, "version", "missing"))?;
    if version != FEATURES_VERSION.to_string() {
        return Err(FeatureIoError::SchemaVersionMismatch {
            found: version.to_string(),
        });
    }
    let mut fields = [None; 5];
    const KEYS: [&str; 5] = ["d", "width", "height", "count", "depths"];
    for tok in tokens {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(1, tok, "expected key=value"))?;
        let slot = KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| parse_err(1, key, "unknown header field"))?;
        if fields[slot].is_some() {
            return Err(parse_err(1, key, "duplicate header field"));
        }
        let v: u64 = value.parse().map_err(|e| parse_err(1, key, format!("{e}")))?;
        fields[slot] = Some(v);
    }
    let get = |i: usize| fields[i].ok_or_else(|| parse_err(1, KEYS[i], "missing header field"));
    let depths = match get(4)? {
        0 => false,
        1 => true,
        other => return Err(parse_err(1, "depths", format!("expected 0 or 1, got {other}"))),
    };
    let narrow = |i: usize| -> Result<u32, FeatureIoError> {
        u32::try_from(get(i)?).map_err(|e| parse_err(1, KEYS[i], e.to_string()))
    };
    Ok(Header {
        dim: get(0)? as usize,
        width: narrow(1)?,
        height: narrow(2)?,
        count: get(3)? as usize,
        depths,
    })
}

fn parse_field<T: std::str::FromStr>(tok: &str, line: usize, field: &str) -> Result<T, FeatureIoError>
where
    T::Err: std::fmt::Display,
{
    tok.parse()
        .map_err(|e: T::Err| parse_err(line, field, format!("{tok:?}: {e}")))
}

pub fn read_features<R: BufRead>(source: R) -> Result<FeatureSet, FeatureIoError> {
    let mut lines = source.lines();
    let header_text = lines.next().ok_or_else(|| parse_err(1, "header", "empty input"))??;
    let header = parse_header(&header_text)?;
    let expected_tokens = 3 + usize::from(header.depths) + header.dim;
    let mut keypoints = Vec::with_capacity(header.count);
    let mut depths = header.depths.then(|| Vec::with_capacity(header.count));
    for i in 0..header.count {
        let line_no = i + 2;
        let text = lines.next().ok_or_else(|| {
            parse_err(
                line_no,
                "record",
                format!("truncated: expected {} records, found {i}", header.count),
            )
        })??;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != expected_tokens {
            return Err(parse_err(
                line_no,
                "record",
                format!("expected {expected_tokens} fields, found {}", tokens.len()),
            ));
        }
        let u: f64 = parse_field(tokens[0], line_no, "u")?;
        let v: f64 = parse_field(tokens[1], line_no, "v")?;
        let score: f64 = parse_field(tokens[2], line_no, "score")?;
        let mut at = 3;
        if let Some(d) = depths.as_mut() {
            d.push(parse_field::<f64>(tokens[3], line_no, "depth")?);
            at = 4;
        }
        let descriptor = tokens[at..]
            .iter()
            .enumerate()
            .map(|(j, t)| parse_field::<f32>(t, line_no, &format!("descriptor[{j}]")))
            .collect::<Result<Vec<_>, _>>()?;
        keypoints.push(Keypoint {
            pixel: Vector2::new(u, v),
            descriptor,
            score,
            landmark_id: None,
        });
    }
    for (extra, text) in lines.enumerate() {
        if !text?.trim().is_empty() {
            return Err(parse_err(header.count + 2 + extra, "record", "more records than count"));
        }
    }
    Ok(FeatureSet::new(keypoints, header.width, header.height, depths)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::synthetic::{synthetic_detect, SyntheticDetectorConfig};
    use crate::geometry::CameraIntrinsics;
    use crate::sim::scene::{viewpoint, SceneConfig, DEFAULT_VIEW_DIRECTION};
    use proptest::prelude::*;

    fn sample(seed: u64, with_depths: bool) -> FeatureSet {
        let scene = SceneConfig {
            seed,
            object_landmarks: 20,
            clutter_landmarks: 10,
            descriptor_dim: 32,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let pose = viewpoint(DEFAULT_VIEW_DIRECTION, 0.3).unwrap();
        let fs = synthetic_detect(
            &scene,
            &pose,
            &CameraIntrinsics::default(),
            &SyntheticDetectorConfig {
                seed,
                ..Default::default()
            },
        );
        let kps: Vec<_> = fs
            .keypoints()
            .iter()
            .cloned()
            .map(|mut k| {
                k.landmark_id = None;
                k
            })
            .collect();
        FeatureSet::new(
            kps,
            fs.width(),
            fs.height(),
            if with_depths {
                fs.depths().map(<[f64]>::to_vec)
            } else {
                None
            },
        )
        .unwrap()
    }

    fn round_trip(fs: &FeatureSet) -> FeatureSet {
        let mut buf = Vec::new();
        write_features(fs, &mut buf).unwrap();
        read_features(buf.as_slice()).unwrap()
    }

    proptest! {
        #[test]
        fn write_read_is_lossless(seed in 0u64..500, with_depths: bool) {
            let fs = sample(seed, with_depths);
            let back = round_trip(&fs);
            prop_assert_eq!(back.len(), fs.len());
            for (a, b) in fs.keypoints().iter().zip(back.keypoints()) {
                prop_assert_eq!(a.pixel.x.to_bits(), b.pixel.x.to_bits());
                prop_assert_eq!(a.pixel.y.to_bits(), b.pixel.y.to_bits());
                prop_assert_eq!(a.score.to_bits(), b.score.to_bits());
                prop_assert!(a.descriptor.iter().zip(&b.descriptor).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            prop_assert_eq!(back, fs);
        }
    }

    #[test]
    fn empty_set_round_trips() {
        let fs = FeatureSet::empty(320, 240);
        assert_eq!(round_trip(&fs), fs);
    }

    fn written(fs: &FeatureSet) -> String {
        let mut buf = Vec::new();
        write_features(fs, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn truncated_record_is_a_parse_error() {
        let text = written(&sample(1, true));
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        match read_features(cut.as_bytes()) {
            Err(FeatureIoError::ParseError { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let half_line = &text[..text.len() - 40];
        assert!(matches!(
            read_features(half_line.as_bytes()),
            Err(FeatureIoError::ParseError { .. })
        ));
    }

    #[test]
    fn depth_flag_mismatch_rejected() {
        let text = written(&sample(2, true)).replacen("depths=1", "depths=0", 1);
        assert!(matches!(
            read_features(text.as_bytes()),
            Err(FeatureIoError::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = written(&sample(3, false)).replacen("FEATURES 1", "FEATURES 2", 1);
        assert!(matches!(
            read_features(text.as_bytes()),
            Err(FeatureIoError::SchemaVersionMismatch { .. })
        ));
    }

    #[test]
    fn bad_fields_located() {
        let text = written(&sample(4, false));
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut toks: Vec<&str> = lines[2].split(' ').collect();
        toks[2] = "high";
        lines[2] = toks.join(" ");
        match read_features(lines.join("\n").as_bytes()) {
            Err(FeatureIoError::ParseError { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "score");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_features("FEATURES 1 d=2 width=320\n".as_bytes()).is_err());
        assert!(read_features("".as_bytes()).is_err());
        let extra = format!("{text}1 1 0.5 1 0\n");
        assert!(read_features(extra.as_bytes()).is_err());
    }
}
