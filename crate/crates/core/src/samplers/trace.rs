//! Per-iteration trace rows and an incremental CSV writer.

use std::io::{self, Write};

use serde::Serialize;

/// Scalar summaries of one sampler state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub n_clusters: usize,
    /// Distinct values per group.
    pub group_clusters: Vec<usize>,
    /// Clusters with members from two or more groups.
    pub shared: usize,
    pub u: Vec<f64>,
    pub theta: f64,
    pub z: f64,
    pub rhos: Vec<f64>,
    pub variances: Vec<f64>,
}

impl TraceRow {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["iteration".to_string(), "n_clusters".to_string()];
        h.extend((0..self.group_clusters.len()).map(|g| format!("k_{g}")));
        h.push("shared".into());
        h.extend((0..self.u.len()).map(|g| format!("u_{g}")));
        h.push("theta".into());
        h.push("z".into());
        h.extend((0..self.rhos.len()).map(|i| format!("rho_{i}")));
        h.extend((0..self.variances.len()).map(|i| format!("var_{i}")));
        h
    }

    pub fn values(&self) -> Vec<String> {
        let mut v = vec![self.iteration.to_string(), self.n_clusters.to_string()];
        v.extend(self.group_clusters.iter().map(|k| k.to_string()));
        v.push(self.shared.to_string());
        v.extend(self.u.iter().map(|x| x.to_string()));
        v.push(self.theta.to_string());
        v.push(self.z.to_string());
        v.extend(self.rhos.iter().map(|x| x.to_string()));
        v.extend(self.variances.iter().map(|x| x.to_string()));
        v
    }
}

/// Appends rows to a CSV sink, writing the header with the first row and
/// flushing every `flush_every` rows.
pub struct TraceWriter<W: Write> {
    out: io::BufWriter<W>,
    flush_every: usize,
    rows: usize,
    width: Option<usize>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, flush_every: usize) -> Self {
        Self { out: io::BufWriter::new(out), flush_every: flush_every.max(1), rows: 0, width: None }
    }

    fn line(&mut self, cells: &[String]) -> io::Result<()> {
        writeln!(self.out, "{}", cells.join(","))
    }

    pub fn write(&mut self, row: &TraceRow) -> io::Result<()> {
        self.write_cells(&row.header(), &row.values())
    }

    /// Writes a row of labels (one column per observation).
    pub fn write_labels(&mut self, iteration: usize, labels: &[usize]) -> io::Result<()> {
        let header: Vec<String> =
            std::iter::once("iteration".to_string()).chain((0..labels.len()).map(|i| format!("obs_{i}"))).collect();
        let values: Vec<String> =
            std::iter::once(iteration.to_string()).chain(labels.iter().map(|l| l.to_string())).collect();
        self.write_cells(&header, &values)
    }

    fn write_cells(&mut self, header: &[String], values: &[String]) -> io::Result<()> {
        match self.width {
            None => {
                self.line(header)?;
                self.width = Some(header.len());
            }
            Some(w) if w != values.len() => {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "trace row width changed"));
            }
            _ => {}
        }
        self.line(values)?;
        self.rows += 1;
        if self.rows % self.flush_every == 0 {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| e.into_error())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_then_rows() {
        let row = TraceRow {
            iteration: 3,
            n_clusters: 2,
            group_clusters: vec![1, 2],
            shared: 1,
            u: vec![0.5, 1.5],
            theta: 1.0,
            z: 0.25,
            rhos: vec![-0.5],
            variances: vec![],
        };
        let mut w = TraceWriter::new(Vec::new(), 10);
        w.write(&row).unwrap();
        w.write(&row).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,n_clusters,k_0,k_1,shared,u_0,u_1,theta,z,rho_0");
        assert_eq!(lines[1], "3,2,1,2,1,0.5,1.5,1,0.25,-0.5");
        assert_eq!(lines.len(), 3);
    }
}
