//! CSV files with a versioned schema comment on the first line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// File name, schema version and columns of one CSV output.
pub struct Schema {
    pub file: &'static str,
    pub version: u32,
    pub columns: &'static [&'static str],
}

pub const TREES: Schema = Schema {
    file: "trees.csv",
    version: 1,
    columns: &["tree_id", "sigma", "n_nodes", "max_delta", "oversize_flag"],
};

pub const FRAGMENTS: Schema = Schema {
    file: "fragments.csv",
    version: 1,
    columns: &["tree_id", "theta", "rank", "mass", "dust", "tagged"],
};

pub const EVENTS: Schema = Schema {
    file: "events.csv",
    version: 1,
    columns: &["tree_id", "theta", "parent_mass", "child_rank", "child_mass", "cut_delta"],
};

pub const REPORTS: Schema = Schema {
    file: "reports.csv",
    version: 1,
    columns: &["check", "target", "estimate", "stderr", "tolerance", "pass"],
};

pub const SPLITS: Schema = Schema {
    file: "splits.csv",
    version: 1,
    columns: &["pipeline", "parent_mass", "largest_fraction", "count_above", "weight"],
};

pub struct Csv {
    w: csv::Writer<BufWriter<File>>,
}

impl Csv {
    pub fn create(dir: &Path, schema: Schema) -> std::io::Result<Csv> {
        let mut f = BufWriter::new(File::create(dir.join(schema.file))?);
        writeln!(f, "# crtfrag {} v{}", schema.file, schema.version)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(schema.columns)?;
        Ok(Csv { w })
    }

    pub fn row(&mut self, fields: &[String]) -> csv::Result<()> {
        self.w.write_record(fields)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.w.flush()
    }
}
