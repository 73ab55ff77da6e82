use std::fs;
use std::path::Path;

use rand::Rng;

use super::DiffusionError;
use crate::textio::{push_hex_values, read_container, ContainerWriter, Fnv1a, FormatError};

/// Class names in label order.
pub const SPRITE_CLASSES: [&str; 4] = ["circle", "square", "plus", "stripes"];

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub image: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    samples: Vec<Sample>,
    n_classes: usize,
    d_img: usize,
}

impl ToyDataset {
    pub fn new(samples: Vec<Sample>, n_classes: usize) -> Result<Self, DiffusionError> {
        let d_img = samples.first().map_or(0, |s| s.image.len());
        for (i, s) in samples.iter().enumerate() {
            if s.id != i {
                return Err(DiffusionError::Config(format!(
                    "sample ids must be 0..N, found {} at position {i}",
                    s.id
                )));
            }
            if s.image.len() != d_img {
                return Err(DiffusionError::Length {
                    expected: d_img,
                    got: s.image.len(),
                });
            }
            if s.label >= n_classes {
                return Err(DiffusionError::LabelRange {
                    label: s.label,
                    classes: n_classes,
                });
            }
        }
        Ok(ToyDataset {
            samples,
            n_classes,
            d_img,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn d_img(&self) -> usize {
        self.d_img
    }

    pub fn images_of_class(&self, label: usize) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.image.clone())
            .collect()
    }

    /// FNV-1a over each sample in id order: pixel values as little-endian
    /// `f64` bytes followed by the label as a little-endian `u64`.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        for s in &self.samples {
            for v in &s.image {
                h.update(&v.to_le_bytes());
            }
            h.update(&(s.label as u64).to_le_bytes());
        }
        h.finish()
    }

    pub fn to_text(&self) -> String {
        let mut w = ContainerWriter::new();
        w.line(&format!(
            "LGRAD-DS v1 {:016x} {} {} {}",
            self.fingerprint(),
            self.samples.len(),
            self.d_img,
            self.n_classes
        ));
        for s in &self.samples {
            let mut line = format!("img {} {}", s.id, s.label);
            push_hex_values(&mut line, &s.image);
            w.line(&line);
        }
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<Self, DiffusionError> {
        let lines = read_container(text)?;
        let header = lines
            .first()
            .ok_or_else(|| FormatError::parse(1, "missing header"))?;
        let mut f = header.fields();
        f.expect("LGRAD-DS")?;
        f.expect("v1")?;
        let stored = f.next_hex_u64("fingerprint")?;
        let n = f.next_usize("sample count")?;
        let d_img = f.next_usize("d_img")?;
        let n_classes = f.next_usize("class count")?;
        f.finish()?;
        if lines.len() != n + 1 {
            return Err(FormatError::parse(
                lines.len(),
                format!("expected {n} image lines, found {}", lines.len() - 1),
            )
            .into());
        }
        let mut samples = Vec::with_capacity(n);
        for (id, line) in lines[1..].iter().enumerate() {
            let mut f = line.fields();
            f.expect("img")?;
            let sid = f.next_usize("sample id")?;
            if sid != id {
                return Err(line
                    .error(format!("expected sample id {id}, found {sid}"))
                    .into());
            }
            let label = f.next_usize("label")?;
            let image = f.hex_values(d_img, "pixel")?;
            f.finish()?;
            samples.push(Sample { id, image, label });
        }
        let ds = ToyDataset {
            samples,
            n_classes,
            d_img,
        };
        let computed = ds.fingerprint();
        if computed != stored {
            return Err(FormatError::Integrity { stored, computed }.into());
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        fs::write(path, self.to_text()).map_err(|source| DiffusionError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let text = fs::read_to_string(path).map_err(|source| DiffusionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}

/// Four classes of `d_side x d_side` sprites (filled circle, filled square,
/// plus-cross, diagonal stripes) with ±1 px position jitter and ±0.1
/// intensity jitter around 0.9. Ids are class-major.
pub fn make_sprite_dataset<R: Rng + ?Sized>(
    n_per_class: usize,
    d_side: usize,
    rng: &mut R,
) -> Result<ToyDataset, DiffusionError> {
    if d_side < 8 {
        return Err(DiffusionError::SideTooSmall(d_side));
    }
    let mut samples = Vec::with_capacity(4 * n_per_class);
    for label in 0..SPRITE_CLASSES.len() {
        for _ in 0..n_per_class {
            let dx = rng.random_range(-1i32..=1);
            let dy = rng.random_range(-1i32..=1);
            let intensity = (0.9 + rng.random_range(-0.1..=0.1f64)).clamp(0.0, 1.0);
            let image = draw_sprite(label, d_side, dx, dy, intensity);
            samples.push(Sample {
                id: samples.len(),
                image,
                label,
            });
        }
    }
    ToyDataset::new(samples, SPRITE_CLASSES.len())
}

fn draw_sprite(label: usize, side: usize, dx: i32, dy: i32, intensity: f64) -> Vec<f64> {
    let s = side as f64;
    let cx = (s - 1.0) / 2.0 + f64::from(dx);
    let cy = (s - 1.0) / 2.0 + f64::from(dy);
    let mut img = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            let (fx, fy) = (x as f64 - cx, y as f64 - cy);
            let on = match label {
                0 => fx * fx + fy * fy <= (0.3 * s).powi(2),
                1 => fx.abs() <= 0.25 * s && fy.abs() <= 0.25 * s,
                2 => {
                    let arm = 0.4 * s;
                    (fx.abs() <= 0.5 && fy.abs() <= arm) || (fy.abs() <= 0.5 && fx.abs() <= arm)
                }
                _ => (x as i32 + y as i32 + dx + dy).rem_euclid(4) < 2,
            };
            if on {
                img[y * side + x] = intensity;
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_per_class_gives_four_ids() {
        let ds = make_sprite_dataset(1, 8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let ids: Vec<_> = ds.samples().iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert_eq!(ds.d_img(), 64);
        assert_eq!(ds.n_classes(), 4);
    }

    #[test]
    fn circle_center_is_bright_and_values_in_range() {
        for seed in 0..20 {
            let ds = make_sprite_dataset(3, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for s in ds.samples() {
                assert!(s.image.iter().all(|v| (0.0..=1.0).contains(v)));
                if s.label == 0 {
                    assert!(s.image[4 * 8 + 4] >= 0.8);
                }
                assert!(s.image.iter().any(|v| *v > 0.0));
            }
        }
    }

    #[test]
    fn fingerprint_is_stable_per_seed() {
        let a = make_sprite_dataset(2, 10, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = make_sprite_dataset(2, 10, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let c = make_sprite_dataset(2, 10, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn side_below_eight_is_rejected() {
        assert!(make_sprite_dataset(1, 7, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let ds = make_sprite_dataset(2, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let text = ds.to_text();
        assert!(text.starts_with("LGRAD-DS v1 "));
        assert_eq!(ToyDataset::from_text(&text).unwrap(), ds);
    }
}
