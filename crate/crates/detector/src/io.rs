//! Netpbm images, annotation sidecars and detection rows.
//!
//! Annotation sidecar: one face per line, `x y w h` followed by ten landmark
//! coordinates (`x y` for left eye, right eye, nose, left and right mouth
//! corner), separated by commas or whitespace. `#` starts a comment.

use std::fs;
use std::io::Write;
use std::path::Path;

use stnface_core::image::GrayImage;
use stnface_core::{BBox, Detection, Error, Result};

use crate::synth::{AnnotatedSample, Face};

fn tokens(data: &[u8]) -> (Vec<String>, usize) {
    // Header tokens up to the fourth, skipping comments; returns offset after it.
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < 4 && i < data.len() {
        match data[i] {
            b'#' => {
                while i < data.len() && data[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < data.len() && !data[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push(String::from_utf8_lossy(&data[start..i]).into_owned());
            }
        }
    }
    (out, i + 1)
}

/// Reads binary or ASCII PGM, or binary PPM (converted to luma).
pub fn decode_netpbm(data: &[u8]) -> Result<GrayImage> {
    let (head, offset) = tokens(data);
    if head.len() < 4 {
        return Err(Error::Format("truncated netpbm header".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad header field {s:?}")));
    let (w, h, maxval) = (num(&head[1])?, num(&head[2])?, num(&head[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    let scale = |v: usize| ((v * 255 + maxval / 2) / maxval) as u8;
    match head[0].as_str() {
        "P5" => {
            let body = data.get(offset..offset + w * h).ok_or_else(|| Error::Format("truncated P5 data".into()))?;
            GrayImage::from_vec(w, h, body.iter().map(|&v| scale(v as usize)).collect())
        }
        "P2" => {
            let text = String::from_utf8_lossy(data.get(offset.min(data.len())..).unwrap_or(&[]));
            let vals: Vec<u8> = text
                .split_ascii_whitespace()
                .take(w * h)
                .map(|t| num(t).map(scale))
                .collect::<Result<_>>()?;
            GrayImage::from_vec(w, h, vals)
        }
        "P6" => {
            let body = data.get(offset..offset + 3 * w * h).ok_or_else(|| Error::Format("truncated P6 data".into()))?;
            let rgb: Vec<u8> = body.iter().map(|&v| scale(v as usize)).collect();
            GrayImage::from_rgb(w, h, &rgb)
        }
        m => Err(Error::Format(format!("unsupported netpbm magic {m}"))),
    }
}

pub fn read_netpbm(path: &Path) -> Result<GrayImage> {
    decode_netpbm(&fs::read(path)?)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    Ok(fs::write(path, encode_pgm(img))?)
}

fn numbers(line: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number {t:?}"))))
        .collect()
}

pub fn parse_annotations(text: &str) -> Result<Vec<Face>> {
    let mut faces = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = numbers(line)?;
        if v.len() != 14 {
            return Err(Error::Format(format!("line {}: expected 14 values, got {}", n + 1, v.len())));
        }
        let landmarks = std::array::from_fn(|i| [v[4 + 2 * i], v[5 + 2 * i]]);
        faces.push(Face { bbox: BBox::new(v[0], v[1], v[2], v[3]), landmarks });
    }
    Ok(faces)
}

pub fn format_annotations(faces: &[Face]) -> String {
    let mut s = String::new();
    for f in faces {
        let b = f.bbox;
        s.push_str(&format!("{} {} {} {}", b.x, b.y, b.w, b.h));
        for p in &f.landmarks {
            s.push_str(&format!(" {} {}", p[0], p[1]));
        }
        s.push('\n');
    }
    s
}

/// `x,y,w,h,score` then ten landmark values (empty fields without landmarks).
pub fn detection_row(d: &Detection) -> String {
    let b = d.bbox;
    let mut row = format!("{:.3},{:.3},{:.3},{:.3},{:.6}", b.x, b.y, b.w, b.h, d.score);
    match &d.landmarks {
        Some(lm) => lm.points().iter().for_each(|p| row.push_str(&format!(",{:.3},{:.3}", p[0], p[1]))),
        None => row.push_str(",,,,,,,,,,"),
    }
    row
}

pub fn write_detections<W: Write>(w: &mut W, image_id: &str, dets: &[Detection]) -> Result<()> {
    for d in dets {
        writeln!(w, "{image_id},{}", detection_row(d))?;
    }
    Ok(())
}

/// Parses rows written by [`write_detections`] into `(image_id, box, score)`.
pub fn parse_detections(text: &str) -> Result<Vec<(String, Detection)>> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 6 {
            return Err(Error::Format(format!("short detection row {line:?}")));
        }
        let v: Vec<f64> = fields[1..6]
            .iter()
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad field {t:?}"))))
            .collect::<Result<_>>()?;
        out.push((fields[0].to_string(), Detection::new(BBox::new(v[0], v[1], v[2], v[3]), v[4])));
    }
    Ok(out)
}

/// Writes `NNNNN.pgm` plus an `NNNNN.txt` annotation sidecar per sample.
pub fn write_corpus(dir: &Path, samples: &[AnnotatedSample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        write_pgm(&dir.join(format!("{i:05}.pgm")), &s.image)?;
        fs::write(dir.join(format!("{i:05}.txt")), format!("# {}\n{}", s.provenance, format_annotations(&s.faces)))?;
    }
    Ok(())
}

/// Loads every `.pgm`/`.ppm` in `dir` (sorted by name) with its `.txt`
/// sidecar; a missing sidecar means no faces.
pub fn read_corpus(dir: &Path) -> Result<Vec<AnnotatedSample>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm" | "pnm")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let image = read_netpbm(&p)?;
            let side = p.with_extension("txt");
            let faces = if side.exists() { parse_annotations(&fs::read_to_string(&side)?)? } else { Vec::new() };
            Ok(AnnotatedSample { image, faces, provenance: p.display().to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_and_ascii() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        assert_eq!(decode_netpbm(&encode_pgm(&img)).unwrap(), img);
        let ascii = b"P2\n# comment\n2 2\n15\n0 15\n7 8\n";
        let g = decode_netpbm(ascii).unwrap();
        assert_eq!(g.data(), &[0, 255, 119, 136]);
        let ppm = [b"P6 1 1 255\n".as_slice(), &[255, 0, 0]].concat();
        assert_eq!(decode_netpbm(&ppm).unwrap().data(), &[76]);
        assert!(decode_netpbm(b"P5 4 4 255\n\x00").is_err());
    }

    #[test]
    fn annotations_round_trip() {
        let f = Face { bbox: BBox::new(1.0, 2.0, 40.0, 40.0), landmarks: [[10.5, 12.0]; 5] };
        let text = format!("# header\n{}", format_annotations(std::slice::from_ref(&f)));
        assert_eq!(parse_annotations(&text).unwrap(), vec![f]);
        assert!(parse_annotations("1 2 3").is_err());
    }
}
