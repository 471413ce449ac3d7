//! Tidy CSV of a closed-loop trajectory, one row per sample time.

use std::io::Write;
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::simulate::Trajectory;

/// `step, time, x_0.., u_0.., xs_0.., us_0.., iterations`
pub fn plot_header(nx: usize, nu: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "time".to_string()];
    h.extend((0..nx).map(|i| format!("x_{i}")));
    h.extend((0..nu).map(|i| format!("u_{i}")));
    h.extend((0..nx).map(|i| format!("xs_{i}")));
    h.extend((0..nu).map(|i| format!("us_{i}")));
    h.push("iterations".to_string());
    h
}

pub fn emit_plot_data<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(plot_header(traj.nx, traj.nu))?;
    for s in &traj.steps {
        let mut row = vec![s.step.to_string(), s.time.to_string()];
        row.extend(s.x.iter().chain(&s.u).chain(&s.x_s).chain(&s.u_s).map(|v| v.to_string()));
        row.push(s.iterations.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn write_plot_csv(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    emit_plot_data(traj, std::io::BufWriter::new(file))
}
