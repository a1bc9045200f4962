//! Row-major image grids and PGM (binary, 8/16-bit) input and output.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed PGM: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `height × width` values, row `h` (depth / image row) then column `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::InvalidArgument(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for h in 0..height {
            for w in 0..width {
                data.push(f(h, w));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize) -> T {
        self.data[h * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, v: T) {
        self.data[h * self.width + w] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        Self::from_fn(self.width, self.height, |h, w| self.get(h, self.width - 1 - w))
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

fn header<W: Write>(out: &mut W, width: usize, height: usize, maxval: u32) -> std::io::Result<()> {
    write!(out, "P5\n{width} {height}\n{maxval}\n")
}

/// Intensities in `[0, 1]` (clamped) as 8-bit binary PGM.
pub fn write_pgm8<W: Write>(out: &mut W, img: &Grid<f64>) -> Result<(), ImageError> {
    header(out, img.width, img.height, 255)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Binary mask as 8-bit PGM (0 / 255).
pub fn write_mask_pgm<W: Write>(out: &mut W, mask: &Grid<bool>) -> Result<(), ImageError> {
    header(out, mask.width, mask.height, 255)?;
    let bytes: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Raw 16-bit values as big-endian binary PGM.
pub fn write_pgm16<W: Write>(out: &mut W, img: &Grid<u16>) -> Result<(), ImageError> {
    header(out, img.width, img.height, 65535)?;
    let mut bytes = Vec::with_capacity(img.data.len() * 2);
    for v in &img.data {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

fn token<R: BufRead>(r: &mut R) -> Result<String, ImageError> {
    let mut tok = String::new();
    loop {
        let mut b = [0u8];
        if r.read(&mut b)? == 0 {
            break;
        }
        let c = b[0] as char;
        if c == '#' && tok.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(ImageError::Format("unexpected end of header".into()));
    }
    Ok(tok)
}

fn num<R: BufRead>(r: &mut R) -> Result<u32, ImageError> {
    let t = token(r)?;
    t.parse()
        .map_err(|_| ImageError::Format(format!("bad header number {t:?}")))
}

/// Reads a binary (`P5`) or ASCII (`P2`) PGM, returning raw values and maxval.
pub fn read_pgm_raw<R: Read>(input: R) -> Result<(Grid<u16>, u32), ImageError> {
    let mut r = BufReader::new(input);
    let magic = token(&mut r)?;
    let (w, h, maxval) = (num(&mut r)? as usize, num(&mut r)? as usize, num(&mut r)?);
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::Format(format!("maxval {maxval}")));
    }
    let n = w * h;
    let data: Vec<u16> = match magic.as_str() {
        "P5" => {
            let wide = maxval > 255;
            let mut buf = vec![0u8; if wide { 2 * n } else { n }];
            r.read_exact(&mut buf)
                .map_err(|_| ImageError::Format("truncated pixel data".into()))?;
            if wide {
                buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            } else {
                buf.into_iter().map(u16::from).collect()
            }
        }
        "P2" => (0..n)
            .map(|_| num(&mut r).map(|v| v as u16))
            .collect::<Result<_, _>>()?,
        m => return Err(ImageError::Format(format!("unsupported magic {m:?}"))),
    };
    if data.iter().any(|&v| u32::from(v) > maxval) {
        return Err(ImageError::Format("value above maxval".into()));
    }
    Ok((Grid::from_vec(w, h, data)?, maxval))
}

/// Intensities scaled to `[0, 1]` by the file's maxval.
pub fn read_pgm<R: Read>(input: R) -> Result<Grid<f64>, ImageError> {
    let (g, maxval) = read_pgm_raw(input)?;
    Ok(g.map(|v| f64::from(v) / f64::from(maxval)))
}

/// Mask: any value above half the maxval is set.
pub fn read_mask_pgm<R: Read>(input: R) -> Result<Grid<bool>, ImageError> {
    let (g, maxval) = read_pgm_raw(input)?;
    Ok(g.map(|v| u32::from(v) * 2 > maxval))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, ImageError> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_pgm8(path: &Path, img: &Grid<f64>) -> Result<(), ImageError> {
    let mut f = create(path)?;
    write_pgm8(&mut f, img)?;
    f.flush()?;
    Ok(())
}

pub fn save_mask(path: &Path, mask: &Grid<bool>) -> Result<(), ImageError> {
    let mut f = create(path)?;
    write_mask_pgm(&mut f, mask)?;
    f.flush()?;
    Ok(())
}

pub fn save_pgm16(path: &Path, img: &Grid<u16>) -> Result<(), ImageError> {
    let mut f = create(path)?;
    write_pgm16(&mut f, img)?;
    f.flush()?;
    Ok(())
}

pub fn load_pgm(path: &Path) -> Result<Grid<f64>, ImageError> {
    read_pgm(std::fs::File::open(path)?)
}

pub fn load_mask(path: &Path) -> Result<Grid<bool>, ImageError> {
    read_mask_pgm(std::fs::File::open(path)?)
}

pub fn load_pgm16(path: &Path) -> Result<Grid<u16>, ImageError> {
    Ok(read_pgm_raw(std::fs::File::open(path)?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm8_round_trip() {
        let img = Grid::from_fn(7, 3, |h, w| (h * 7 + w) as f64 / 20.0);
        let mut buf = Vec::new();
        write_pgm8(&mut buf, &img).unwrap();
        let back = read_pgm(&buf[..]).unwrap();
        assert!(img.same_shape(&back));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm16_round_trip() {
        let img = Grid::from_fn(4, 5, |h, w| (h * 1000 + w * 7) as u16);
        let mut buf = Vec::new();
        write_pgm16(&mut buf, &img).unwrap();
        let (back, maxval) = read_pgm_raw(&buf[..]).unwrap();
        assert_eq!(maxval, 65535);
        assert_eq!(back, img);
    }

    #[test]
    fn ascii_with_comments() {
        let text = "P2\n# comment\n3 2\n10\n0 5 10\n10 5 0\n";
        let m = read_mask_pgm(text.as_bytes()).unwrap();
        assert_eq!(m.data(), &[false, false, true, true, false, false]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_pgm(&b"P6\n1 1\n255\n\0\0\0"[..]).is_err());
        assert!(read_pgm(&b"P5\n4 4\n255\n\0"[..]).is_err());
    }

    #[test]
    fn mirror_twice_is_identity() {
        let g = Grid::from_fn(5, 2, |h, w| h * 10 + w);
        assert_eq!(g.mirrored().get(0, 0), 4);
        assert_eq!(g.mirrored().mirrored(), g);
    }
}
