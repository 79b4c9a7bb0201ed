//! Synthetic camera frames.
//!
//! Frames are small grayscale PNGs. The first row carries a machine-readable
//! header so receivers can check what they got: bytes 0..4 hold the frame
//! counter (big-endian u32) and bytes 4..28 hold the overlaid pose as six
//! big-endian f32 values (position then roll/pitch/yaw). The remaining rows
//! draw a bar that sweeps with the counter.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::fixture::Pose;
use crate::clock::Stamp;

pub const FRAME_WIDTH: u32 = 32;
pub const FRAME_HEIGHT: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoStreamSpec {
    pub name: String,
    pub topic: String,
    pub fps: f64,
    /// Motion group whose pose is overlaid; defaults to the first group.
    #[serde(default)]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub frame_id: u32,
    pub pose: [f32; 6],
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("bad png: {0}")]
    Png(#[from] png::DecodingError),
    #[error("unexpected frame layout")]
    Layout,
}

pub fn render_frame(frame_id: u32, pose: &Pose) -> Vec<u8> {
    let (w, h) = (FRAME_WIDTH as usize, FRAME_HEIGHT as usize);
    let mut pixels = vec![0u8; w * h];
    pixels[0..4].copy_from_slice(&frame_id.to_be_bytes());
    let values = pose.position.iter().chain(pose.orientation.iter());
    for (i, v) in values.enumerate() {
        let at = 4 + i * 4;
        pixels[at..at + 4].copy_from_slice(&(*v as f32).to_be_bytes());
    }
    let bar = frame_id as usize % w;
    for row in 1..h {
        for col in 0..w {
            pixels[row * w + col] = if col == bar { 255 } else { (row * 20) as u8 };
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, FRAME_WIDTH, FRAME_HEIGHT);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("png header into memory");
        writer
            .write_image_data(&pixels)
            .expect("png data into memory");
    }
    out
}

/// Message published on a video topic.
pub fn frame_message(frame_id: u32, pose: &Pose, stamp: Stamp) -> Value {
    json!({
        "format": "png",
        "data": B64.encode(render_frame(frame_id, pose)),
        "stamp": stamp,
        "frame_id": frame_id,
    })
}

pub fn decode_frame(data_b64: &str) -> Result<DecodedFrame, FrameError> {
    let bytes = B64.decode(data_b64)?;
    let decoder = png::Decoder::new(bytes.as_slice());
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Grayscale || (info.width as usize) < 28 {
        return Err(FrameError::Layout);
    }
    let frame_id = u32::from_be_bytes(buf[0..4].try_into().map_err(|_| FrameError::Layout)?);
    let mut pose = [0f32; 6];
    for (i, p) in pose.iter_mut().enumerate() {
        let at = 4 + i * 4;
        *p = f32::from_be_bytes(buf[at..at + 4].try_into().map_err(|_| FrameError::Layout)?);
    }
    Ok(DecodedFrame {
        frame_id,
        pose,
        width: info.width,
        height: info.height,
    })
}
