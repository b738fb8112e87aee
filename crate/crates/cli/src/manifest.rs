//! Light field manifest: a plain key-value file describing a directory of
//! view images plus optional depth.
//!
//! ```text
//! pattern = view_{u}_{v}.png
//! n_u = 3
//! n_v = 3
//! gamma = linear          # or srgb (default)
//! disparity = 0.5         # optional global disparity
//! depth_pattern = gt/depth_{u}_{v}.pfm   # optional, per view
//! depth_central = depth.pfm              # optional, central view only
//! ```

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use lfintrinsic_core::pipeline::DepthInput;
use lfintrinsic_core::LightField;

use crate::io;

#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub pattern: String,
    pub n_u: usize,
    pub n_v: usize,
    pub srgb: bool,
    pub disparity: Option<f64>,
    pub depth_pattern: Option<String>,
    pub depth_central: Option<String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_keyvals(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got {raw:?}", lineno + 1);
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let mut kv = parse_keyvals(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let mut take = |k: &str| kv.remove(k);
        let pattern = take("pattern")
            .with_context(|| format!("{}: missing key `pattern`", path.display()))?;
        if !pattern.contains("{u}") || !pattern.contains("{v}") {
            bail!("{}: pattern must contain {{u}} and {{v}}", path.display());
        }
        let n_u: usize = take("n_u")
            .with_context(|| format!("{}: missing key `n_u`", path.display()))?
            .parse()
            .context("n_u")?;
        let n_v: usize = take("n_v")
            .with_context(|| format!("{}: missing key `n_v`", path.display()))?
            .parse()
            .context("n_v")?;
        let srgb = match take("gamma").as_deref() {
            None | Some("srgb") => true,
            Some("linear") => false,
            Some(other) => bail!("{}: gamma must be srgb or linear, got {other}", path.display()),
        };
        let disparity = take("disparity").map(|s| s.parse()).transpose().context("disparity")?;
        let depth_pattern = take("depth_pattern");
        let depth_central = take("depth_central");
        if let Some(key) = kv.keys().next() {
            bail!("{}: unknown manifest key `{key}`", path.display());
        }
        Ok(Self {
            dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            pattern,
            n_u,
            n_v,
            srgb,
            disparity,
            depth_pattern,
            depth_central,
        })
    }

    pub fn view_path(&self, u: usize, v: usize) -> PathBuf {
        self.dir.join(
            self.pattern
                .replace("{u}", &u.to_string())
                .replace("{v}", &v.to_string()),
        )
    }

    /// Decodes all views (in parallel) into a light field. Missing files are
    /// reported together; a dimension mismatch names the offending file.
    pub fn load_lightfield(&self) -> Result<LightField> {
        let mut paths = Vec::with_capacity(self.n_u * self.n_v);
        for u in 0..self.n_u {
            for v in 0..self.n_v {
                paths.push(self.view_path(u, v));
            }
        }
        let missing: Vec<String> = paths
            .iter()
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            bail!("missing view files: {}", missing.join(", "));
        }
        let views = paths
            .par_iter()
            .map(|p| io::load_view(p, self.srgb))
            .collect::<Result<Vec<_>>>()?;
        let (h0, w0) = (views[0].height(), views[0].width());
        for (p, v) in paths.iter().zip(&views) {
            if (v.height(), v.width()) != (h0, w0) {
                bail!(
                    "{}: dimensions {}x{} differ from {}x{} of {}",
                    p.display(),
                    v.width(),
                    v.height(),
                    w0,
                    h0,
                    paths[0].display()
                );
            }
        }
        Ok(LightField::from_views(self.n_u, self.n_v, &views)?)
    }

    /// Assembles the depth input declared by the manifest.
    pub fn load_depth(&self) -> Result<DepthInput> {
        if let Some(pat) = &self.depth_pattern {
            let mut maps = Vec::with_capacity(self.n_u * self.n_v);
            for u in 0..self.n_u {
                for v in 0..self.n_v {
                    let p = self.dir.join(
                        pat.replace("{u}", &u.to_string()).replace("{v}", &v.to_string()),
                    );
                    maps.push(io::load_depth(&p)?);
                }
            }
            return Ok(DepthInput::PerView(maps));
        }
        if let Some(rel) = &self.depth_central {
            let map = io::load_depth(&self.dir.join(rel))?;
            return Ok(DepthInput::Central {
                map,
                disparity: self.disparity,
            });
        }
        Ok(DepthInput::None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyval_parsing() {
        let kv = parse_keyvals("a = 1\n# comment\nb=two # trailing\n\n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two");
        assert!(parse_keyvals("no equals sign").is_err());
    }
}
