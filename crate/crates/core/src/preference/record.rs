use std::io::{BufRead, Write};

use crate::env::{Trajectory, TreeIndex};
use crate::error::{CoreError, Result};

/// A labeled pair; `z = true` means `traj_1` is preferred.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceRecord {
    pub traj_1: Trajectory,
    pub traj_2: Trajectory,
    pub z: bool,
}

impl PreferenceRecord {
    pub fn new(traj_1: Trajectory, traj_2: Trajectory, z: bool) -> Result<Self> {
        if traj_1.prompt() != traj_2.prompt() {
            return Err(CoreError::Structural(
                "preference pair spans two prompts".into(),
            ));
        }
        Ok(PreferenceRecord { traj_1, traj_2, z })
    }

    pub fn prompt(&self) -> usize {
        self.traj_1.prompt()
    }

    pub fn winner(&self) -> &Trajectory {
        if self.z {
            &self.traj_1
        } else {
            &self.traj_2
        }
    }

    pub fn loser(&self) -> &Trajectory {
        if self.z {
            &self.traj_2
        } else {
            &self.traj_1
        }
    }

    /// `prompt traj_1 traj_2 z`, trajectories as `a.o.a.o.a`.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.prompt(),
            self.traj_1.encode(),
            self.traj_2.encode(),
            self.z as u8
        )
    }

    pub fn from_line(tree: &TreeIndex, line: &str) -> Result<Self> {
        let bad = |m: &str| CoreError::Parse {
            location: "preference record".into(),
            message: format!("{m}: `{line}`"),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let prompt: usize = fields[0].parse().map_err(|_| bad("bad prompt id"))?;
        let z = match fields[3] {
            "1" => true,
            "0" => false,
            _ => return Err(bad("z must be 0 or 1")),
        };
        let t1 = Trajectory::decode(tree, prompt, fields[1])?;
        let t2 = Trajectory::decode(tree, prompt, fields[2])?;
        Self::new(t1, t2, z)
    }
}

pub fn write_records<W: Write>(records: &[PreferenceRecord], mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}

/// Reads one record per line; blank lines and `#` comments are skipped.
pub fn read_records<R: BufRead>(tree: &TreeIndex, input: R) -> Result<Vec<PreferenceRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(PreferenceRecord::from_line(tree, t).map_err(|e| match e {
            CoreError::Parse { message, .. } => CoreError::Parse {
                location: format!("line {}", i + 1),
                message,
            },
            other => other,
        })?);
    }
    Ok(out)
}
