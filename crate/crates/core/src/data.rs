//! CSV datasets.
//!
//! Vector problems: header `x_1,...,x_d,y`, one sample per row. Multi-task
//! problems: header `task_id,x_1,...,x_d,y` with task ids `0..n-1`, each
//! task appearing at least once. Numbers are written in Rust's shortest
//! round-trip form, so writing and re-reading is lossless.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::solvers::{MultiTaskProblem, Task};

fn data_err(e: impl std::fmt::Display) -> Error {
    Error::Data(e.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn check_header(header: &csv::StringRecord, leading: Option<&str>) -> Result<usize> {
    let fields: Vec<&str> = header.iter().collect();
    let offset = usize::from(leading.is_some());
    if fields.len() < offset + 2 {
        return Err(Error::Data("header needs at least one input column and y".into()));
    }
    if let Some(name) = leading {
        if fields[0] != name {
            return Err(Error::Data(format!("first column must be {name}, got {}", fields[0])));
        }
    }
    let d = fields.len() - offset - 1;
    for (j, f) in fields[offset..offset + d].iter().enumerate() {
        if *f != format!("x_{}", j + 1) {
            return Err(Error::Data(format!("expected column x_{}, got {f}", j + 1)));
        }
    }
    if fields[fields.len() - 1] != "y" {
        return Err(Error::Data("last column must be y".into()));
    }
    Ok(d)
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Data(format!("line {line}: not a number: {s:?}")))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes())
}

/// Inputs as rows of `x` and outputs `y`.
pub fn parse_vector_csv(text: &str) -> Result<(Mat, Vector)> {
    let mut rdr = reader(text);
    let d = check_header(rdr.headers().map_err(data_err)?, None)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(data_err)?;
        let line = i + 2;
        for j in 0..d {
            xs.push(parse_f64(&rec[j], line)?);
        }
        ys.push(parse_f64(&rec[d], line)?);
    }
    if ys.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    Ok((Mat::from_row_slice(ys.len(), d, &xs), Vector::from_vec(ys)))
}

pub fn read_vector_csv(path: &Path) -> Result<(Mat, Vector)> {
    parse_vector_csv(&read_text(path)?)
}

fn header(d: usize, leading: Option<&str>) -> Vec<String> {
    leading
        .map(str::to_string)
        .into_iter()
        .chain((1..=d).map(|j| format!("x_{j}")))
        .chain(std::iter::once("y".to_string()))
        .collect()
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("ascii output")
}

pub fn vector_csv(x: &Mat, y: &Vector) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(x.ncols(), None)).expect("in-memory writer");
    for i in 0..x.nrows() {
        let row = (0..x.ncols()).map(|j| x[(i, j)].to_string()).chain(std::iter::once(y[i].to_string()));
        w.write_record(row).expect("in-memory writer");
    }
    finish(w)
}

/// Input dimension and per-task samples, ordered by task id.
pub fn parse_multitask_csv(text: &str) -> Result<(usize, Vec<Task>)> {
    let mut rdr = reader(text);
    let d = check_header(rdr.headers().map_err(data_err)?, Some("task_id"))?;
    let mut rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(data_err)?;
        let line = i + 2;
        let t: usize = rec[0].parse().map_err(|_| Error::Data(format!("line {line}: bad task id {:?}", &rec[0])))?;
        if t >= rows.len() {
            rows.resize(t + 1, (Vec::new(), Vec::new()));
        }
        for j in 0..d {
            rows[t].0.push(parse_f64(&rec[j + 1], line)?);
        }
        rows[t].1.push(parse_f64(&rec[d + 1], line)?);
    }
    if rows.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    let mut tasks = Vec::with_capacity(rows.len());
    for (t, (xs, ys)) in rows.into_iter().enumerate() {
        if ys.is_empty() {
            return Err(Error::Data(format!("task {t} has no samples")));
        }
        tasks.push(Task { x: Mat::from_row_slice(ys.len(), d, &xs), y: Vector::from_vec(ys) });
    }
    Ok((d, tasks))
}

pub fn read_multitask_csv(path: &Path) -> Result<(usize, Vec<Task>)> {
    parse_multitask_csv(&read_text(path)?)
}

pub fn multitask_csv(problem: &MultiTaskProblem) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(problem.d, Some("task_id"))).expect("in-memory writer");
    for (t, task) in problem.tasks.iter().enumerate() {
        for i in 0..task.x.nrows() {
            let row = std::iter::once(t.to_string())
                .chain((0..problem.d).map(|j| task.x[(i, j)].to_string()))
                .chain(std::iter::once(task.y[i].to_string()));
            w.write_record(row).expect("in-memory writer");
        }
    }
    finish(w)
}
