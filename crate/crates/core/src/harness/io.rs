//! Annotation and detection list files.
//!
//! Annotations: `image_path x y w h d_m`. Detections:
//! `image_path x y w h score d_m [level]`, with `d_m = -1` when no
//! distance is attached. Paths may not contain whitespace.

use crate::bbox::BBox;
use crate::fcw::WarningLevel;
use crate::format::{content_lines, fields, parse_finite, real, FormatError};

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image: String,
    pub bbox: BBox,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image: String,
    pub bbox: BBox,
    pub score: f64,
    pub distance: Option<f64>,
    pub level: Option<WarningLevel>,
}

fn check_path(p: &str) -> Result<(), String> {
    if p.is_empty() || p.contains(char::is_whitespace) || p.contains('#') {
        Err(format!("image path {p:?} is empty or contains whitespace or '#'"))
    } else {
        Ok(())
    }
}

fn parse_box(toks: &[&str], line: usize) -> Result<BBox, FormatError> {
    let b = BBox::new(
        parse_finite(toks[0], line, "x")?,
        parse_finite(toks[1], line, "y")?,
        parse_finite(toks[2], line, "w")?,
        parse_finite(toks[3], line, "h")?,
    );
    if !(b.w > 0.0 && b.h > 0.0) {
        return Err(FormatError::new(line, "box width and height must be > 0"));
    }
    Ok(b)
}

pub fn write_annotations(items: &[Annotation]) -> Result<String, String> {
    let mut s = String::from("# image_path x y w h d_m\n");
    for a in items {
        check_path(&a.image)?;
        let b = a.bbox;
        s.push_str(&format!(
            "{} {} {} {} {} {}\n",
            a.image,
            real(b.x),
            real(b.y),
            real(b.w),
            real(b.h),
            real(a.d)
        ));
    }
    Ok(s)
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, FormatError> {
    content_lines(text)
        .map(|(line, content)| {
            let t = fields::<6>(content, line)?;
            let d = parse_finite(t[5], line, "d_m")?;
            if !(d > 0.0) {
                return Err(FormatError::new(line, "d_m must be > 0"));
            }
            Ok(Annotation {
                image: t[0].to_string(),
                bbox: parse_box(&t[1..5], line)?,
                d,
            })
        })
        .collect()
}

pub fn write_detections(items: &[DetectionRecord]) -> Result<String, String> {
    let mut s = String::from("# image_path x y w h score d_m [level]\n");
    for r in items {
        check_path(&r.image)?;
        let b = r.bbox;
        s.push_str(&format!(
            "{} {} {} {} {} {} {}",
            r.image,
            real(b.x),
            real(b.y),
            real(b.w),
            real(b.h),
            real(r.score),
            real(r.distance.unwrap_or(-1.0))
        ));
        if let Some(level) = r.level {
            s.push_str(&format!(" {level}"));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>, FormatError> {
    content_lines(text)
        .map(|(line, content)| {
            let t: Vec<&str> = content.split_whitespace().collect();
            if t.len() != 7 && t.len() != 8 {
                return Err(FormatError::new(line, format!("expected 7 or 8 fields, found {}", t.len())));
            }
            let d = parse_finite(t[6], line, "d_m")?;
            let distance = if d == -1.0 {
                None
            } else if d > 0.0 {
                Some(d)
            } else {
                return Err(FormatError::new(line, "d_m must be > 0 or -1"));
            };
            let level = match t.get(7) {
                Some(tok) => Some(tok.parse::<WarningLevel>().map_err(|e| FormatError::new(line, e))?),
                None => None,
            };
            Ok(DetectionRecord {
                image: t[0].to_string(),
                bbox: parse_box(&t[1..5], line)?,
                score: parse_finite(t[5], line, "score")?,
                distance,
                level,
            })
        })
        .collect()
}
