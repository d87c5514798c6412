//! File formats: detection and trajectory CSVs, feature tables (CSV and raw
//! f32 binary with a sidecar header), JSON reports. Parsers report the
//! offending line on malformed input.

use std::fmt::Write as _;
use std::path::Path;

use crate::affinity::FeatureVector;
use crate::error::{Error, Result};
use crate::metrics::{Box2D, LabeledBox};
use crate::pipeline::Detection;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// "camera,frame,x,y,w,h,feature_id[,gt_id]", one detection per line.
pub fn detections_to_csv(detections: &[Detection]) -> String {
    let mut out = String::new();
    for d in detections {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            d.camera, d.frame, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.feature_id
        );
        if let Some(gt) = d.gt_id {
            let _ = write!(out, ",{}", gt);
        }
        out.push('\n');
    }
    out
}

pub fn detections_from_csv(text: &str, path: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 && fields.len() != 8 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected 7 or 8 fields, got {}", fields.len()),
            ));
        }
        let parse_u = |s: &str, what: &str| -> Result<u64> {
            s.trim()
                .parse()
                .map_err(|e| Error::parse(path, lineno + 1, format!("{}: {}", what, e)))
        };
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|e| Error::parse(path, lineno + 1, format!("{}: {}", what, e)))
        };
        out.push(Detection {
            camera: parse_u(fields[0], "camera")? as u32,
            frame: parse_u(fields[1], "frame")?,
            bbox: Box2D {
                x: parse_f(fields[2], "x")?,
                y: parse_f(fields[3], "y")?,
                w: parse_f(fields[4], "w")?,
                h: parse_f(fields[5], "h")?,
            },
            feature_id: parse_u(fields[6], "feature_id")? as usize,
            gt_id: if fields.len() == 8 {
                Some(parse_u(fields[7], "gt_id")?)
            } else {
                None
            },
        });
        let d = out.last().unwrap();
        if d.bbox.w <= 0.0 || d.bbox.h <= 0.0 {
            return Err(Error::parse(path, lineno + 1, "box width and height must be positive"));
        }
    }
    Ok(out)
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    write_text(path, &detections_to_csv(detections))
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    detections_from_csv(&read_text(path)?, &path.display().to_string())
}

/// "trajectory_id,camera,frame,x,y,w,h", one row per detection. Used for
/// both tracker output and ground truth.
pub fn trajectories_to_csv(rows: &[LabeledBox]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.identity, r.camera, r.frame, r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h
        );
    }
    out
}

pub fn trajectories_from_csv(text: &str, path: &str) -> Result<Vec<LabeledBox>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let parse_u = |s: &str, what: &str| -> Result<u64> {
            s.trim()
                .parse()
                .map_err(|e| Error::parse(path, lineno + 1, format!("{}: {}", what, e)))
        };
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|e| Error::parse(path, lineno + 1, format!("{}: {}", what, e)))
        };
        out.push(LabeledBox {
            identity: parse_u(fields[0], "trajectory_id")?,
            camera: parse_u(fields[1], "camera")? as u32,
            frame: parse_u(fields[2], "frame")?,
            bbox: Box2D {
                x: parse_f(fields[3], "x")?,
                y: parse_f(fields[4], "y")?,
                w: parse_f(fields[5], "w")?,
                h: parse_f(fields[6], "h")?,
            },
        });
    }
    Ok(out)
}

pub fn write_trajectories(path: &Path, rows: &[LabeledBox]) -> Result<()> {
    write_text(path, &trajectories_to_csv(rows))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<LabeledBox>> {
    trajectories_from_csv(&read_text(path)?, &path.display().to_string())
}

/// "id,v0,v1,...,vd-1", one feature per line, ids dense from 0.
pub fn features_to_csv(features: &[FeatureVector]) -> String {
    let mut out = String::new();
    for (id, f) in features.iter().enumerate() {
        let _ = write!(out, "{}", id);
        for v in &f.0 {
            let _ = write!(out, ",{}", v);
        }
        out.push('\n');
    }
    out
}

pub fn features_from_csv(text: &str, path: &str) -> Result<Vec<FeatureVector>> {
    let mut rows: Vec<(usize, FeatureVector)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id: usize = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::parse(path, lineno + 1, e.to_string()))?;
        let values: std::result::Result<Vec<f64>, _> =
            fields.map(|s| s.trim().parse::<f64>()).collect();
        let values =
            values.map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        if values.is_empty() {
            return Err(Error::parse(path, lineno + 1, "feature has no values"));
        }
        rows.push((id, FeatureVector(values)));
    }
    rows.sort_by_key(|(id, _)| *id);
    for (expected, (id, _)) in rows.iter().enumerate() {
        if *id != expected {
            return Err(Error::Invalid(format!(
                "feature ids must be dense from 0; missing id {}",
                expected
            )));
        }
    }
    Ok(rows.into_iter().map(|(_, f)| f).collect())
}

fn sidecar_path(bin_path: &Path) -> std::path::PathBuf {
    let mut s = bin_path.as_os_str().to_os_string();
    s.push(".hdr");
    std::path::PathBuf::from(s)
}

/// Raw little-endian f32 values, count*dim in row order, with a "count dim"
/// sidecar header next to the binary.
pub fn write_features_bin(bin_path: &Path, features: &[FeatureVector]) -> Result<()> {
    let dim = features.first().map_or(0, FeatureVector::dim);
    let mut bytes = Vec::with_capacity(features.len() * dim * 4);
    for f in features {
        if f.dim() != dim {
            return Err(Error::Invalid("all features must share one dimension".into()));
        }
        for &v in &f.0 {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(bin_path, &bytes).map_err(|e| Error::io(bin_path.display().to_string(), e))?;
    write_text(&sidecar_path(bin_path), &format!("{} {}\n", features.len(), dim))
}

pub fn read_features_bin(bin_path: &Path) -> Result<Vec<FeatureVector>> {
    let hdr_path = sidecar_path(bin_path);
    let hdr = read_text(&hdr_path)?;
    let mut fields = hdr.split_whitespace();
    let count: usize = fields
        .next()
        .ok_or_else(|| Error::parse(hdr_path.display().to_string(), 1, "missing count"))?
        .parse()
        .map_err(|e: std::num::ParseIntError| Error::parse(hdr_path.display().to_string(), 1, e.to_string()))?;
    let dim: usize = fields
        .next()
        .ok_or_else(|| Error::parse(hdr_path.display().to_string(), 1, "missing dim"))?
        .parse()
        .map_err(|e: std::num::ParseIntError| Error::parse(hdr_path.display().to_string(), 1, e.to_string()))?;
    let bytes = std::fs::read(bin_path).map_err(|e| Error::io(bin_path.display().to_string(), e))?;
    if bytes.len() != count * dim * 4 {
        return Err(Error::Invalid(format!(
            "feature binary holds {} bytes, header implies {}",
            bytes.len(),
            count * dim * 4
        )));
    }
    let mut features = Vec::with_capacity(count);
    for row in 0..count {
        let mut values = Vec::with_capacity(dim);
        for col in 0..dim {
            let off = (row * dim + col) * 4;
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            values.push(v as f64);
        }
        features.push(FeatureVector(values));
    }
    Ok(features)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_detections() -> Vec<Detection> {
        vec![
            Detection {
                camera: 0,
                frame: 5,
                bbox: Box2D { x: 1.5, y: 2.0, w: 10.0, h: 20.0 },
                feature_id: 0,
                gt_id: Some(3),
            },
            Detection {
                camera: 1,
                frame: 6,
                bbox: Box2D { x: 0.0, y: 0.0, w: 5.0, h: 5.0 },
                feature_id: 1,
                gt_id: None,
            },
        ]
    }

    #[test]
    fn detections_round_trip() {
        let dets = sample_detections();
        let csv = detections_to_csv(&dets);
        let back = detections_from_csv(&csv, "mem").unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].gt_id, Some(3));
        assert_eq!(back[1].gt_id, None);
        assert_eq!(back[0].bbox, dets[0].bbox);
    }

    #[test]
    fn malformed_detection_line_reports_line_number() {
        let csv = "0,1,2,3,4,5,0\nnot,a,detection\n";
        match detections_from_csv(csv, "bad.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn trajectories_round_trip() {
        let rows = vec![LabeledBox {
            identity: 7,
            camera: 2,
            frame: 100,
            bbox: Box2D { x: 1.0, y: 2.0, w: 3.0, h: 4.0 },
        }];
        let csv = trajectories_to_csv(&rows);
        assert_eq!(csv, "7,2,100,1,2,3,4\n");
        let back = trajectories_from_csv(&csv, "mem").unwrap();
        assert_eq!(back[0].identity, 7);
    }

    #[test]
    fn features_csv_round_trip() {
        let feats = vec![
            FeatureVector(vec![0.5, -0.25]),
            FeatureVector(vec![1.0, 0.0]),
        ];
        let csv = features_to_csv(&feats);
        let back = features_from_csv(&csv, "mem").unwrap();
        assert_eq!(back, feats);
    }

    #[test]
    fn features_bin_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.bin");
        let feats = vec![
            FeatureVector(vec![0.5, -0.25, 1.0]),
            FeatureVector(vec![0.0, 0.125, -2.0]),
        ];
        write_features_bin(&path, &feats).unwrap();
        let back = read_features_bin(&path).unwrap();
        assert_eq!(back, feats); // exactly representable in f32
    }

    #[test]
    fn features_csv_rejects_sparse_ids() {
        let csv = "0,1.0\n2,2.0\n";
        assert!(features_from_csv(csv, "mem").is_err());
    }
}
