//! Plain-text domain files: a small header, an occupancy raster, and a
//! cell table with centers and boundary distances for external tools.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::grid::{from_parts, DomainKind, DomainSpec, GridDomain};
use crate::error::{Error, Result};

const MAGIC: &str = "korn-lab domain v1";

pub fn save_domain(dom: &GridDomain, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_domain(dom, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_domain(path: &Path) -> Result<GridDomain> {
    let mut r = BufReader::new(File::open(path)?);
    read_domain(&mut r)
}

pub fn write_domain(dom: &GridDomain, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dim {}", dom.dim)?;
    writeln!(w, "h {}", dom.h)?;
    write!(w, "lo")?;
    for a in 0..dom.dim {
        write!(w, " {}", dom.lo[a])?;
    }
    writeln!(w)?;
    write!(w, "ext")?;
    for a in 0..dom.dim {
        write!(w, " {}", dom.ext[a])?;
    }
    writeln!(w)?;
    if let Some(spec) = &dom.spec {
        writeln!(w, "kind {}", spec.kind.name())?;
        writeln!(w, "resolution {}", spec.resolution)?;
        if let Some(d) = spec.depth {
            writeln!(w, "depth {d}")?;
        }
    }
    if let Some(s) = dom.slit {
        writeln!(w, "slit {} {} {} {}", s[0], s[1], s[2], s[3])?;
    }
    writeln!(w, "pruned {}", dom.pruned_cells)?;
    writeln!(w, "occupancy")?;
    for z in 0..dom.ext[2] {
        if dom.dim == 3 {
            writeln!(w, "slab {z}")?;
        }
        for y in 0..dom.ext[1] {
            let mut row = String::with_capacity(dom.ext[0]);
            for x in 0..dom.ext[0] {
                row.push(if dom.is_occupied([x, y, z]) { '#' } else { '.' });
            }
            writeln!(w, "{row}")?;
        }
    }
    writeln!(w, "cells {}", dom.n_cells())?;
    if dom.dim == 2 {
        writeln!(w, "idx,cx,cy,delta")?;
    } else {
        writeln!(w, "idx,cx,cy,cz,delta")?;
    }
    for r in 0..dom.n_cells() {
        let p = dom.center(r);
        write!(w, "{r}")?;
        for a in 0..dom.dim {
            write!(w, ",{}", p[a])?;
        }
        writeln!(w, ",{}", dom.delta[r])?;
    }
    Ok(())
}

pub fn read_domain(r: &mut impl BufRead) -> Result<GridDomain> {
    let mut lines = r.lines();
    let mut next = |what: &'static str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Parse { what: what.into(), detail: "unexpected end of file".into() })
    };
    let magic = next("magic")?;
    if magic.trim() != MAGIC {
        return Err(Error::Parse {
            what: "magic".into(),
            detail: format!("expected `{MAGIC}`, got `{}`", magic.trim()),
        });
    }

    let mut dim = 0usize;
    let mut h = 0.0f64;
    let mut lo = [0.0f64; 3];
    let mut ext = [0usize; 3];
    let mut kind: Option<DomainKind> = None;
    let mut resolution = 0u32;
    let mut depth: Option<u32> = None;
    let mut slit: Option<[f64; 4]> = None;
    let mut pruned = 0usize;
    loop {
        let line = next("header")?;
        let line = line.trim();
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "dim" => dim = parse(rest, "dim")?,
            "h" => h = parse(rest, "h")?,
            "lo" => {
                for (a, tok) in rest.split_whitespace().enumerate() {
                    lo[a] = parse(tok, "lo")?;
                }
            }
            "ext" => {
                ext = [0, 0, 1];
                for (a, tok) in rest.split_whitespace().enumerate() {
                    ext[a] = parse(tok, "ext")?;
                }
            }
            "kind" => {
                kind = Some(match rest {
                    "unit-square" => DomainKind::UnitSquare,
                    "l-shape" => DomainKind::LShape,
                    "slit-square" => DomainKind::SlitSquare,
                    "koch-prefractal" => DomainKind::KochPrefractal,
                    "cube-3d" => DomainKind::Cube3d,
                    other => {
                        return Err(Error::Parse {
                            what: "kind".into(),
                            detail: format!("unknown domain kind `{other}`"),
                        })
                    }
                })
            }
            "resolution" => resolution = parse(rest, "resolution")?,
            "depth" => depth = Some(parse(rest, "depth")?),
            "slit" => {
                let mut s = [0.0f64; 4];
                for (a, tok) in rest.split_whitespace().enumerate() {
                    if a < 4 {
                        s[a] = parse(tok, "slit")?;
                    }
                }
                slit = Some(s);
            }
            "pruned" => pruned = parse(rest, "pruned")?,
            "occupancy" => break,
            other => {
                return Err(Error::Parse {
                    what: "header".into(),
                    detail: format!("unknown header key `{other}`"),
                })
            }
        }
    }
    if !(dim == 2 || dim == 3) || h <= 0.0 || ext[0] == 0 || ext[1] == 0 {
        return Err(Error::Parse {
            what: "header".into(),
            detail: "missing or invalid dim/h/ext".into(),
        });
    }

    let n_grid = ext[0] * ext[1] * ext[2];
    let mut occ = vec![false; n_grid];
    for z in 0..ext[2] {
        if dim == 3 {
            let slab = next("slab")?;
            if slab.trim() != format!("slab {z}") {
                return Err(Error::Parse {
                    what: "occupancy".into(),
                    detail: format!("expected `slab {z}`, got `{}`", slab.trim()),
                });
            }
        }
        for y in 0..ext[1] {
            let row = next("occupancy row")?;
            let row = row.trim_end();
            if row.chars().count() != ext[0] {
                return Err(Error::Parse {
                    what: "occupancy".into(),
                    detail: format!("row {y} has width {} != {}", row.chars().count(), ext[0]),
                });
            }
            for (x, ch) in row.chars().enumerate() {
                occ[x + ext[0] * (y + ext[1] * z)] = match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(Error::Parse {
                            what: "occupancy".into(),
                            detail: format!("unexpected character `{other}`"),
                        })
                    }
                };
            }
        }
    }

    let cells_line = next("cells")?;
    let declared: usize = match cells_line.trim().split_once(' ') {
        Some(("cells", n)) => parse(n, "cells")?,
        _ => {
            return Err(Error::Parse {
                what: "cells".into(),
                detail: format!("expected `cells <count>`, got `{}`", cells_line.trim()),
            })
        }
    };

    let spec = kind.map(|kind| DomainSpec { kind, resolution, depth });
    let mut dom = from_parts(dim, lo, ext, h, occ, slit, spec)?;
    dom.pruned_cells = pruned;
    if dom.n_cells() != declared {
        return Err(Error::Parse {
            what: "cells".into(),
            detail: format!(
                "occupancy yields {} cells but header declares {declared} \
                 (was the raster edited by hand?)",
                dom.n_cells()
            ),
        });
    }
    Ok(dom)
}

fn parse<T: std::str::FromStr>(tok: &str, what: &'static str) -> Result<T> {
    tok.trim().parse().map_err(|_| Error::Parse {
        what: what.into(),
        detail: format!("cannot parse `{tok}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainKind, DomainSpec};

    fn roundtrip(spec: DomainSpec) {
        let dom = build_domain(&spec).unwrap();
        let mut buf = Vec::new();
        write_domain(&dom, &mut buf).unwrap();
        let back = read_domain(&mut std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back.dim, dom.dim);
        assert_eq!(back.cells, dom.cells);
        assert_eq!(back.pruned_cells, dom.pruned_cells);
        assert_eq!(back.slit, dom.slit);
        assert_eq!(
            back.delta.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            dom.delta.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            "recomputed distances must be bit-identical"
        );
        // A second write must reproduce the bytes exactly.
        let mut buf2 = Vec::new();
        write_domain(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn slit_square_roundtrips() {
        roundtrip(DomainSpec { kind: DomainKind::SlitSquare, resolution: 16, depth: None });
    }

    #[test]
    fn koch_roundtrips() {
        roundtrip(DomainSpec {
            kind: DomainKind::KochPrefractal,
            resolution: 16,
            depth: Some(2),
        });
    }

    #[test]
    fn cube_roundtrips() {
        roundtrip(DomainSpec { kind: DomainKind::Cube3d, resolution: 8, depth: None });
    }

    #[test]
    fn save_and_load_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dom.txt");
        let dom = build_domain(&DomainSpec {
            kind: DomainKind::LShape,
            resolution: 8,
            depth: None,
        })
        .unwrap();
        save_domain(&dom, &path).unwrap();
        let back = load_domain(&path).unwrap();
        assert_eq!(back.cells, dom.cells);
        assert_eq!(back.spec.as_ref().unwrap().resolution, 8);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(read_domain(&mut std::io::Cursor::new(b"not a domain")).is_err());
        let dom = build_domain(&DomainSpec {
            kind: DomainKind::UnitSquare,
            resolution: 8,
            depth: None,
        })
        .unwrap();
        let mut buf = Vec::new();
        write_domain(&dom, &mut buf).unwrap();
        // Flip one occupancy character: declared cell count no longer holds.
        let text = String::from_utf8(buf).unwrap();
        let broken = text.replacen("########", ".#######", 1);
        assert!(read_domain(&mut std::io::Cursor::new(broken.as_bytes())).is_err());
    }
}
