//! Gripper sphere-model files: one `name cx cy cz radius` line per sphere,
//! `#` comments allowed.

use std::path::Path;

use crate::guidance::{GripperModel, GripperSphere};
use crate::{Error, Result, Vec3};

pub fn load_gripper_model(path: &Path) -> Result<GripperModel<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut spheres = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Config(format!(
                "{}:{}: expected 'name cx cy cz radius', got {line:?}",
                path.display(),
                lineno + 1
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| {
                Error::Config(format!("{}:{}: bad number {s:?}: {e}", path.display(), lineno + 1))
            })
        };
        spheres.push(GripperSphere {
            name: fields[0].to_string(),
            center: Vec3::new(num(fields[1])?, num(fields[2])?, num(fields[3])?),
            radius: num(fields[4])?,
        });
    }
    GripperModel::new(spheres)
}

pub fn save_gripper_model(model: &GripperModel<f64>, path: &Path) -> Result<()> {
    let mut text = String::from("# gripper collision spheres: name cx cy cz radius\n");
    for s in &model.spheres {
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            s.name, s.center.x, s.center.y, s.center.z, s.radius
        ));
    }
    super::atomic_write(path, text.as_bytes())
}

/// Built-in parallel gripper with the given aperture.
pub fn default_gripper_model(aperture: f64) -> GripperModel<f64> {
    GripperModel::parallel_default(aperture)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_the_default_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gripper.txt");
        let model = default_gripper_model(0.08);
        save_gripper_model(&model, &path).unwrap();
        let loaded = load_gripper_model(&path).unwrap();
        assert_eq!(loaded.spheres.len(), model.spheres.len());
        for (a, b) in loaded.spheres.iter().zip(&model.spheres) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.center, b.center);
            assert_eq!(a.radius, b.radius);
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gripper.txt");
        std::fs::write(&path, "palm 0 0\n").unwrap();
        assert!(load_gripper_model(&path).is_err());
        std::fs::write(&path, "palm 0 0 zero 0.02\n").unwrap();
        assert!(load_gripper_model(&path).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gripper.txt");
        let mut text = String::from("# header\n\n");
        for k in 0..6 {
            text.push_str(&format!("s{k} 0.0 0.0 {} 0.01\n", k as f64 * 0.01));
        }
        std::fs::write(&path, text).unwrap();
        let model = load_gripper_model(&path).unwrap();
        assert_eq!(model.spheres.len(), 6);
    }
}
