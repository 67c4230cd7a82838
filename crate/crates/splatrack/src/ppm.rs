//! Binary 8-bit P6 frames, stored as `round(255 v)` and read back as `v / 255`.

use std::path::{Path, PathBuf};

use splatrack_core::{Image, Video};

use crate::error::{CliError, Result};

pub fn encode(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::format(path, "truncated PPM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or(""));
    }
    if fields[0] != "P6" {
        return Err(CliError::format(path, "not a binary PPM (P6) file"));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::format(path, format!("bad {what} {s:?} in PPM header")))
    };
    let (w, h, maxval) = (parse(fields[1], "width")?, parse(fields[2], "height")?, parse(fields[3], "maxval")?);
    if maxval != 255 {
        return Err(CliError::format(path, format!("only 8-bit PPM is supported (maxval {maxval})")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    let len = w * h * 3;
    if w == 0 || h == 0 || data.len() != len {
        return Err(CliError::format(
            path,
            format!("expected {len} raster bytes for {w}x{h}, found {}", data.len()),
        ));
    }
    let values = data.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Image::from_vec(w, h, 3, values)?)
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, image: &Image) -> Result<()> {
    if image.channels() != 3 {
        return Err(CliError::Usage(format!("{}: PPM frames need 3 channels", path.display())));
    }
    std::fs::write(path, encode(image)).map_err(|e| CliError::io(path, e))
}

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:04}.ppm")
}

/// The `frame_*.ppm` files of a directory, in name order.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("frame_") && name.ends_with(".ppm") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::format(dir, "no frame_*.ppm files"));
    }
    Ok(paths)
}

pub fn read_video(dir: &Path) -> Result<Video> {
    let mut frames = Vec::new();
    for path in frame_paths(dir)? {
        let img = read(&path)?;
        if let Some(first) = frames.first() {
            let first: &Image = first;
            if !first.same_shape(&img) {
                return Err(CliError::format(
                    &path,
                    format!(
                        "frame is {}x{}, earlier frames are {}x{}",
                        img.width(),
                        img.height(),
                        first.width(),
                        first.height()
                    ),
                ));
            }
        }
        frames.push(img);
    }
    Ok(Video::new(frames)?)
}

pub fn write_video(dir: &Path, video: &Video) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (t, frame) in video.frames().iter().enumerate() {
        write(&dir.join(frame_name(t)), frame)?;
    }
    Ok(())
}
