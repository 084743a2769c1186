//! File formats.
//!
//! - PFM: `Pf` (1 channel) for scalar maps, `PF` (3 channels) for normal maps.
//!   Written little-endian (negative scale) with rows stored bottom-up.
//!   Invalid pixels are written as `+inf` (scalars) or `NaN` (normals); any
//!   non-finite sample reads back as invalid.
//! - 16-bit PNG disparity: `d = (raw - offset) / scale`, `raw == invalid` masked.
//!   Defaults follow the Cityscapes convention (`scale = 256`, `offset = 1`,
//!   `invalid = 0`).
//! - PLY oriented point clouds with `float x y z nx ny nz`, ASCII or binary
//!   little-endian.
//! - Normal-map PNG: `RGB = round(255 * (n + 1) / 2)`, invalid pixels white.
//! - Stats JSON: array of labelled statistics records.

use std::io::{Cursor, Write as _};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::eval::StatsRecord;
use crate::field::{NormalField, ScalarField};
use crate::geometry::{triangulate, StereoRig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfmHeader {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    /// Negative for little-endian payloads.
    pub scale: f64,
}

impl PfmHeader {
    pub fn little_endian(&self) -> bool {
        self.scale < 0.0
    }
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("missing {what}")));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(start, format!("non-ASCII {what}")))?;
        Ok((start, s))
    }
}

/// Parses a PFM header and returns it with the payload offset.
pub fn parse_pfm_header(bytes: &[u8]) -> Result<(PfmHeader, usize)> {
    let mut t = Tokens { bytes, pos: 0 };
    let (at, magic) = t.next("magic")?;
    let channels = match magic {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format(at, format!("bad PFM magic {other:?}"))),
    };
    let mut dim = |what: &str| -> Result<usize> {
        let (at, s) = t.next(what)?;
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::format(at, format!("invalid {what} {s:?}"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (at, s) = t.next("scale")?;
    let scale: f64 = s
        .parse()
        .map_err(|_| Error::format(at, format!("invalid scale {s:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(at, "PFM scale must be finite and non-zero"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if t.pos >= bytes.len() || !bytes[t.pos].is_ascii_whitespace() {
        return Err(Error::format(t.pos, "missing separator after scale"));
    }
    Ok((
        PfmHeader {
            channels,
            width,
            height,
            scale,
        },
        t.pos + 1,
    ))
}

/// Decodes the payload into top-down row order.
fn pfm_samples(bytes: &[u8], expected_channels: usize) -> Result<(PfmHeader, Vec<f32>)> {
    let (header, start) = parse_pfm_header(bytes)?;
    if header.channels != expected_channels {
        return Err(Error::format(
            0,
            format!(
                "expected a {expected_channels}-channel PFM, found {} channels",
                header.channels
            ),
        ));
    }
    let row_len = header.width * header.channels;
    let need = header
        .height
        .checked_mul(row_len)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(0, "PFM dimensions overflow"))?;
    let payload = &bytes[start..];
    if payload.len() < need {
        return Err(Error::format(
            start + payload.len(),
            format!("truncated PFM payload: need {need} bytes, have {}", payload.len()),
        ));
    }
    let le = header.little_endian();
    let mut out = vec![0f32; header.height * row_len];
    for (file_row, chunk) in payload[..need].chunks_exact(row_len * 4).enumerate() {
        let row = header.height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            out[row * row_len + i] = if le {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Ok((header, out))
}

fn pfm_bytes(magic: &str, width: usize, height: usize, channels: usize, sample: impl Fn(usize, usize, usize) -> f32) -> Vec<u8> {
    let header = format!("{magic}\n{width} {height}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + width * height * channels * 4);
    out.extend_from_slice(header.as_bytes());
    for v in (0..height).rev() {
        for u in 0..width {
            for c in 0..channels {
                out.extend_from_slice(&sample(u, v, c).to_le_bytes());
            }
        }
    }
    out
}

pub fn read_pfm(bytes: &[u8]) -> Result<ScalarField> {
    let (h, samples) = pfm_samples(bytes, 1)?;
    ScalarField::from_samples(h.width, h.height, samples.into_iter().map(f64::from).collect())
}

pub fn write_pfm(field: &ScalarField) -> Vec<u8> {
    pfm_bytes("Pf", field.width(), field.height(), 1, |u, v, _| {
        field.get(u, v).map_or(f32::INFINITY, |&x| x as f32)
    })
}

/// Three-channel PFM holding `(nx, ny, nz)`.
pub fn read_pfm_normals(bytes: &[u8]) -> Result<NormalField> {
    let (h, s) = pfm_samples(bytes, 3)?;
    Ok(NormalField::from_fn(h.width, h.height, |u, v| {
        let i = 3 * (v * h.width + u);
        let n = Vector3::new(s[i] as f64, s[i + 1] as f64, s[i + 2] as f64);
        (n.iter().all(|x| x.is_finite()) && n.norm_squared() > 0.0).then_some(n)
    }))
}

pub fn write_pfm_normals(normals: &NormalField) -> Vec<u8> {
    pfm_bytes("PF", normals.width(), normals.height(), 3, |u, v, c| {
        normals.get(u, v).map_or(f32::NAN, |n| n[c] as f32)
    })
}

/// Quantization of 16-bit disparity PNGs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Png16Encoding {
    pub scale: f64,
    pub offset: f64,
    pub invalid: u16,
}

impl Default for Png16Encoding {
    fn default() -> Self {
        Self {
            scale: 256.0,
            offset: 1.0,
            invalid: 0,
        }
    }
}

fn png_error(e: impl std::fmt::Display) -> Error {
    Error::format(0, format!("PNG: {e}"))
}

pub fn read_disparity_png16(bytes: &[u8], enc: &Png16Encoding) -> Result<ScalarField> {
    if !(enc.scale > 0.0) {
        return Err(Error::InvalidArgument("PNG disparity scale must be positive".into()));
    }
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_error)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(
            0,
            format!(
                "disparity PNG must be 16-bit grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(0, "PNG too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_error)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    Ok(ScalarField::from_fn(w, h, |u, v| {
        let i = v * frame.line_size + 2 * u;
        let raw = u16::from_be_bytes([buf[i], buf[i + 1]]);
        (raw != enc.invalid).then(|| (raw as f64 - enc.offset) / enc.scale)
    }))
}

/// Values outside the representable range are clamped; a valid pixel never
/// encodes to the invalid code.
pub fn write_disparity_png16(field: &ScalarField, enc: &Png16Encoding) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(field.len() * 2);
    for v in 0..field.height() {
        for u in 0..field.width() {
            let raw = match field.get(u, v) {
                None => enc.invalid,
                Some(&d) => {
                    let q = (d * enc.scale + enc.offset).round().clamp(0.0, 65535.0) as u16;
                    if q == enc.invalid {
                        if q == u16::MAX { q - 1 } else { q + 1 }
                    } else {
                        q
                    }
                }
            };
            data.extend_from_slice(&raw.to_be_bytes());
        }
    }
    encode_png(field.width(), field.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

fn encode_png(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(png_error)?;
        writer.write_image_data(data).map_err(png_error)?;
        writer.finish().map_err(png_error)?;
    }
    Ok(out)
}

/// `round(255 * (n + 1) / 2)` per channel, rounding halves up.
pub fn normal_to_rgb(n: &Vector3<f64>) -> [u8; 3] {
    n.map(|c| (255.0 * (c + 1.0) / 2.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .into()
}

pub fn write_normal_png(normals: &NormalField) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(normals.len() * 3);
    for v in 0..normals.height() {
        for u in 0..normals.width() {
            let rgb = normals.get(u, v).map_or([255; 3], normal_to_rgb);
            data.extend_from_slice(&rgb);
        }
    }
    encode_png(normals.width(), normals.height(), png::ColorType::Rgb, png::BitDepth::Eight, &data)
}

/// 8-bit mask image: 255 valid, 0 invalid.
pub fn write_mask_png(width: usize, height: usize, mask: &[bool]) -> Result<Vec<u8>> {
    if mask.len() != width * height {
        return Err(Error::InvalidArgument("mask size does not match dimensions".into()));
    }
    let data: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    encode_png(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &data)
}

/// Points with unit normals, in raster order of their source pixels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrientedCloud {
    pub points: Vec<Vector3<f32>>,
    pub normals: Vec<Vector3<f32>>,
}

impl OrientedCloud {
    pub fn new(points: Vec<Vector3<f32>>, normals: Vec<Vector3<f32>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        Ok(Self { points, normals })
    }

    /// Triangulates every pixel carrying both a disparity and a normal.
    pub fn from_maps(disparity: &ScalarField, normals: &NormalField, rig: &StereoRig) -> Result<Self> {
        disparity.same_shape(normals)?;
        let mut cloud = Self::default();
        for v in 0..normals.height() {
            for u in 0..normals.width() {
                let (Some(&d), Some(n)) = (disparity.get(u, v), normals.get(u, v)) else { continue };
                if let Some(p) = triangulate(u as f64, v as f64, d, rig) {
                    cloud.points.push(p.cast());
                    cloud.normals.push(n.cast());
                }
            }
        }
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const PLY_PROPS: [&str; 6] = ["x", "y", "z", "nx", "ny", "nz"];

pub fn write_ply_oriented(cloud: &OrientedCloud, binary: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let format = if binary { "binary_little_endian" } else { "ascii" };
    let _ = write!(out, "ply\nformat {format} 1.0\nelement vertex {}\n", cloud.len());
    for p in PLY_PROPS {
        let _ = writeln!(out, "property float {p}");
    }
    out.extend_from_slice(b"end_header\n");
    for (p, n) in cloud.points.iter().zip(&cloud.normals) {
        let vals = [p.x, p.y, p.z, n.x, n.y, n.z];
        if binary {
            for x in vals {
                out.extend_from_slice(&x.to_le_bytes());
            }
        } else {
            let line: Vec<String> = vals.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

/// Reads PLY files with the vertex layout produced by [`write_ply_oriented`].
pub fn read_ply_oriented(bytes: &[u8]) -> Result<OrientedCloud> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| start + i)
            .ok_or_else(|| Error::format(start, "unterminated PLY header"))?;
        *pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| Error::format(start, "non-UTF-8 PLY header"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };
    let (at, magic) = next_line(&mut pos)?;
    if magic != "ply" {
        return Err(Error::format(at, "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let (at, line) = next_line(&mut pos)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", "1.0"] => binary = Some(false),
            ["format", "binary_little_endian", "1.0"] => binary = Some(true),
            ["format", other, ..] => return Err(Error::format(at, format!("unsupported PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::format(at, format!("bad vertex count {n:?}")))?,
                )
            }
            ["element", other, ..] => return Err(Error::format(at, format!("unsupported element {other}"))),
            ["property", "float", name] => props.push(name.to_string()),
            _ => return Err(Error::format(at, format!("unsupported header line {line:?}"))),
        }
    }
    let binary = binary.ok_or_else(|| Error::format(0, "PLY format line missing"))?;
    let count = count.ok_or_else(|| Error::format(0, "PLY vertex element missing"))?;
    if props != PLY_PROPS {
        return Err(Error::format(0, format!("expected properties x y z nx ny nz, got {props:?}")));
    }

    let mut cloud = OrientedCloud::default();
    let mut push = |v: [f32; 6]| {
        cloud.points.push(Vector3::new(v[0], v[1], v[2]));
        cloud.normals.push(Vector3::new(v[3], v[4], v[5]));
    };
    if binary {
        let need = count
            .checked_mul(24)
            .ok_or_else(|| Error::format(pos, "vertex count overflow"))?;
        if bytes.len() - pos < need {
            return Err(Error::format(bytes.len(), format!("truncated PLY body: need {need} bytes")));
        }
        for rec in bytes[pos..pos + need].chunks_exact(24) {
            let mut v = [0f32; 6];
            for (i, b) in rec.chunks_exact(4).enumerate() {
                v[i] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
            push(v);
        }
    } else {
        let body = std::str::from_utf8(&bytes[pos..]).map_err(|_| Error::format(pos, "non-UTF-8 PLY body"))?;
        let mut lines = body.lines();
        for i in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(bytes.len(), format!("missing vertex {i}")))?;
            let vals: Vec<f32> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(pos, format!("bad vertex {i}: {line:?}")))?;
            let v: [f32; 6] = vals
                .try_into()
                .map_err(|_| Error::format(pos, format!("vertex {i} needs 6 values")))?;
            push(v);
        }
    }
    Ok(cloud)
}

pub fn write_stats_json(records: &[StatsRecord]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(records).expect("stats serialize");
    out.push(b'\n');
    out
}

pub fn read_stats_json(bytes: &[u8]) -> Result<Vec<StatsRecord>> {
    serde_json::from_slice(bytes).map_err(|e| Error::format(e.column(), e.to_string()))
}
