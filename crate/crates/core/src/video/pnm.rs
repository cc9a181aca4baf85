//! Binary PGM (`P5`) / PPM (`P6`) frame sequences, 8-bit, maxval 255.

use std::fs;
use std::path::{Path, PathBuf};

use super::Video;
use crate::error::{Error, Result};

struct PnmImage {
    channels: usize,
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

fn parse_pnm(path: &Path, bytes: &[u8]) -> Result<PnmImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) => {
            return Err(Error::format(
                path,
                format!("unsupported magic number {:?}", String::from_utf8_lossy(m)),
            ))
        }
        None => return Err(Error::format(path, "file too short")),
    };

    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "header value out of range"))?;
    }
    let [cols, rows, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(path, format!("only 8-bit maxval 255 is supported, got {maxval}")));
    }
    if cols == 0 || rows == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(path, "missing whitespace after header"));
    }
    pos += 1;

    let need = rows * cols * channels;
    let pixels = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::format(path, format!("truncated pixel data: need {need} bytes")))?
        .to_vec();
    Ok(PnmImage { channels, rows, cols, pixels })
}

/// Reads an ordered list of PGM/PPM files into one video, one frame per file.
///
/// Bytes become reals without scaling. Every file must share the first
/// file's format and dimensions.
pub fn read_sequence<P: AsRef<Path>>(paths: &[P]) -> Result<Video> {
    let Some(first) = paths.first() else {
        return Err(Error::Config("empty frame list".into()));
    };
    let mut shape: Option<(usize, usize, usize)> = None;
    let mut data = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = parse_pnm(path, &bytes)?;
        let dims = (img.channels, img.rows, img.cols);
        match shape {
            None => shape = Some(dims),
            Some(s) if s != dims => {
                return Err(Error::format(
                    path,
                    format!(
                        "frame is {}x{}x{} but {} is {}x{}x{}",
                        dims.0,
                        dims.1,
                        dims.2,
                        first.as_ref().display(),
                        s.0,
                        s.1,
                        s.2
                    ),
                ))
            }
            Some(_) => {}
        }
        // interleaved -> planar
        let plane = img.rows * img.cols;
        let start = data.len();
        data.resize(start + plane * img.channels, 0.0);
        for (i, px) in img.pixels.chunks_exact(img.channels).enumerate() {
            for (c, &b) in px.iter().enumerate() {
                data[start + c * plane + i] = b as f32;
            }
        }
    }
    let (channels, rows, cols) = shape.expect("at least one frame");
    Video::new(paths.len(), channels, rows, cols, data)
}

/// Lists the `.pgm`/`.ppm` files of `dir` in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir, "no .pgm or .ppm frames found"));
    }
    Ok(files)
}

/// Reads every frame file of `dir`, ordered by file name.
pub fn read_sequence_dir(dir: impl AsRef<Path>) -> Result<Video> {
    read_sequence(&list_frames(dir.as_ref())?)
}

#[inline]
pub(crate) fn to_byte(v: f32) -> u8 {
    // `round` is half-away-from-zero; the cast saturates and maps NaN to 0.
    v.clamp(0.0, 255.0).round() as u8
}

/// Writes one 8-bit frame file per video frame into `dir` (created if
/// missing) and returns the paths in frame order.
pub fn write_sequence(v: &Video, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (magic, ext) = if v.channels() == 1 { ("P5", "pgm") } else { ("P6", "ppm") };
    let plane = v.rows() * v.cols();
    let mut paths = Vec::with_capacity(v.frames());
    for t in 0..v.frames() {
        let mut bytes = format!("{magic}\n{} {}\n255\n", v.cols(), v.rows()).into_bytes();
        bytes.reserve(plane * v.channels());
        let frame = v.frame(t);
        for i in 0..plane {
            for c in 0..v.channels() {
                bytes.push(to_byte(frame[c * plane + i]));
            }
        }
        let path = dir.join(format!("frame_{t:05}.{ext}"));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_conversion_clamps_and_rounds() {
        assert_eq!(to_byte(255.7), 255);
        assert_eq!(to_byte(-3.0), 0);
        assert_eq!(to_byte(2.5), 3);
        assert_eq!(to_byte(2.49), 2);
        assert_eq!(to_byte(f32::NAN), 0);
    }

    #[test]
    fn reads_header_with_comments() {
        let mut bytes = b"P5\n# a comment\n2 1\n# another\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = parse_pnm(Path::new("x.pgm"), &bytes).unwrap();
        assert_eq!((img.channels, img.rows, img.cols), (1, 1, 2));
        assert_eq!(img.pixels, vec![0, 255]);
    }

    #[test]
    fn rejects_ascii_and_16_bit() {
        assert!(parse_pnm(Path::new("a"), b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pnm(Path::new("a"), b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(parse_pnm(Path::new("a"), b"P5\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn sequence_round_trip_and_shape() {
        let dir = tempfile::tempdir().unwrap();
        let v = Video::from_fn(3, 1, 16, 16, |t, _, y, x| ((t * 50 + y * 16 + x) % 256) as f32).unwrap();
        let files = write_sequence(&v, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let back = read_sequence(&files).unwrap();
        assert_eq!(back.shape(), v.shape());
        assert_eq!(back, v);
        assert_eq!(read_sequence_dir(dir.path()).unwrap(), v);
    }

    #[test]
    fn color_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Video::from_fn(2, 3, 5, 7, |t, c, y, x| ((t * 3 + c * 80 + y * 7 + x) % 256) as f32).unwrap();
        let files = write_sequence(&v, dir.path()).unwrap();
        assert!(files[0].extension().unwrap() == "ppm");
        assert_eq!(read_sequence(&files).unwrap(), v);
    }

    #[test]
    fn byte_255_reads_as_255() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, b"P5 1 1 255 \xff").unwrap();
        let v = read_sequence(&[&p]).unwrap();
        assert_eq!(v.data(), &[255.0]);
    }

    #[test]
    fn mixed_formats_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Video::filled(1, 1, 4, 4, 10.0).unwrap();
        let color = Video::filled(1, 3, 4, 4, 10.0).unwrap();
        let g = write_sequence(&gray, dir.path().join("g")).unwrap();
        let c = write_sequence(&color, dir.path().join("c")).unwrap();
        let err = read_sequence(&[g[0].clone(), c[0].clone()]).unwrap_err();
        assert!(err.to_string().contains(&c[0].display().to_string()), "{err}");
    }

    #[test]
    fn mismatched_dimensions_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_sequence(&Video::zeros(1, 1, 4, 4).unwrap(), dir.path().join("a")).unwrap();
        let b = write_sequence(&Video::zeros(1, 1, 4, 5).unwrap(), dir.path().join("b")).unwrap();
        let err = read_sequence(&[a[0].clone(), b[0].clone()]).unwrap_err();
        assert!(err.to_string().contains("b/frame_00000.pgm"), "{err}");
    }

    #[test]
    fn unwritable_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let v = Video::zeros(1, 1, 2, 2).unwrap();
        assert!(write_sequence(&v, blocker.join("sub")).is_err());
    }
}
