use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::Basis;

/// One shot: Alice's basis and outcome, Bob's heterodyne pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub basis: Basis,
    pub alice_value: f64,
    pub bob_x: f64,
    pub bob_p: f64,
    pub accepted: bool,
}

impl Record {
    /// `|γ|² = (X_het² + P_het²)/2`.
    pub fn outcome_norm_sqr(&self) -> f64 {
        0.5 * (self.bob_x * self.bob_x + self.bob_p * self.bob_p)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadratureBatch {
    pub records: Vec<Record>,
}

const HEADER: [&str; 6] = ["idx", "alice_basis", "alice_value", "bob_x", "bob_p", "accepted"];

impl QuadratureBatch {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn accepted_count(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    /// Writes `idx,alice_basis,alice_value,bob_x,bob_p,accepted`. Floats
    /// use the shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Parse {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(HEADER).map_err(io)?;
        for (i, r) in self.records.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.basis.label().to_string(),
                r.alice_value.to_string(),
                r.bob_x.to_string(),
                r.bob_p.to_string(),
                if r.accepted { "1" } else { "0" }.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(())
    }

    /// Reads either the full schema or the ingest schema without the
    /// `accepted` column (every record then counts as accepted).
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let with_flag = if cols == HEADER {
            true
        } else if cols == HEADER[..5] {
            false
        } else {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header \"{}\" (accepted optional), got \"{}\"",
                    HEADER.join(","),
                    cols.join(",")
                ),
            });
        };

        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let expected = if with_flag { 6 } else { 5 };
            if rec.len() != expected {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {expected} fields, found {}", rec.len()),
                });
            }
            let num = |k: usize| -> Result<f64> {
                let s = rec[k].trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("column {} is not a finite number: {s:?}", HEADER[k]),
                    })
            };
            let idx = rec[0].trim().parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("bad idx {:?}", &rec[0]),
            })?;
            if idx != row {
                return Err(Error::Parse {
                    line,
                    message: format!("idx {idx} out of sequence (expected {row})"),
                });
            }
            let basis = rec[1].trim().parse::<Basis>().map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse { line, message },
                other => other,
            })?;
            let accepted = if with_flag {
                match rec[5].trim() {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!("accepted must be 0 or 1, got {other:?}"),
                        })
                    }
                }
            } else {
                true
            };
            records.push(Record {
                basis,
                alice_value: num(2)?,
                bob_x: num(3)?,
                bob_p: num(4)?,
                accepted,
            });
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> QuadratureBatch {
        QuadratureBatch::new(vec![
            Record {
                basis: Basis::X,
                alice_value: 0.1 + 0.2,
                bob_x: -1.0 / 3.0,
                bob_p: 1e-300,
                accepted: true,
            },
            Record {
                basis: Basis::P,
                alice_value: -2.5,
                bob_x: std::f64::consts::PI,
                bob_p: -0.0,
                accepted: false,
            },
        ])
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let b = sample();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("idx,alice_basis,alice_value,bob_x,bob_p,accepted\n"));
        let back = QuadratureBatch::read_csv(buf.as_slice()).unwrap();
        for (a, b) in back.records.iter().zip(&b.records) {
            assert_eq!(a.alice_value.to_bits(), b.alice_value.to_bits());
            assert_eq!(a.bob_x.to_bits(), b.bob_x.to_bits());
            assert_eq!(a.bob_p.to_bits(), b.bob_p.to_bits());
            assert_eq!(a.accepted, b.accepted);
            assert_eq!(a.basis, b.basis);
        }
    }

    #[test]
    fn ingest_schema_without_flag() {
        let text = "idx,alice_basis,alice_value,bob_x,bob_p\n0,X,1.0,2.0,3.0\n1,P,-1,0,0.5\n";
        let b = QuadratureBatch::read_csv(text.as_bytes()).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.records.iter().all(|r| r.accepted));
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let bad_header = "idx,basis,alice_value,bob_x,bob_p\n0,X,1,2,3\n";
        assert!(matches!(
            QuadratureBatch::read_csv(bad_header.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad_basis = "idx,alice_basis,alice_value,bob_x,bob_p\n0,X,1,2,3\n1,Q,1,2,3\n";
        assert!(matches!(
            QuadratureBatch::read_csv(bad_basis.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let bad_num = "idx,alice_basis,alice_value,bob_x,bob_p\n0,X,1,nan,3\n";
        assert!(matches!(
            QuadratureBatch::read_csv(bad_num.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_idx = "idx,alice_basis,alice_value,bob_x,bob_p\n3,X,1,2,3\n";
        assert!(matches!(
            QuadratureBatch::read_csv(bad_idx.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let short = "idx,alice_basis,alice_value,bob_x,bob_p\n0,X,1,2\n";
        assert!(matches!(
            QuadratureBatch::read_csv(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
