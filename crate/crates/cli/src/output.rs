//! Output directory with atomic file writes: every file is written to a
//! temporary sibling and renamed into place.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use vilab::{Error, Result};

pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write_with(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let tmp = NamedTempFile::new_in(&self.dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            fill(&mut w)?;
            w.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| Error::Io(e.error.to_string()))?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        self.write_with(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

pub fn vector_csv(u: &[f64], w: &mut dyn Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["index", "u"])?;
    for (i, x) in u.iter().enumerate() {
        wtr.write_record([i.to_string(), x.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn gnuplot_table() -> String {
    "set datafile separator ','\n\
     set key autotitle columnhead\n\
     set logscale y\n\
     set xlabel 'row'\n\
     plot 'table.csv' using 1:3 with linespoints title 'error', \\\n\
     \x20    '' using 1:4 with linespoints title 'distance', \\\n\
     \x20    '' using 1:5 with linespoints title 'eps_hat'\n"
        .to_string()
}

pub fn gnuplot_criterion() -> String {
    "set datafile separator ','\n\
     set logscale xy\n\
     set xlabel 'n'\n\
     plot 'criterion.csv' using 1:2 with lines title 'distance', \\\n\
     \x20    '' using 1:3 with lines title 'eps one_plus_norm', \\\n\
     \x20    '' using 1:4 with lines title 'eps norm'\n"
        .to_string()
}

pub fn gnuplot_solution() -> String {
    "set datafile separator ','\n\
     set xlabel 'index'\n\
     plot 'solution.csv' using 1:2 every ::1 with linespoints title 'u'\n"
        .to_string()
}
