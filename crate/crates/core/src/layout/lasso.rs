//! Lasso selection over 2-D entity embeddings.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::geometry::{contains, Point};
use super::LayoutError;

pub const EMBEDDING_HEADER: [&str; 3] = ["entity_id", "x", "y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub entity_id: String,
    pub x: f64,
    pub y: f64,
}

/// Ids of the points inside `polygon` (boundary included), in input order.
pub fn lasso_select(points: &[EmbeddingPoint], polygon: &[Point]) -> Result<Vec<String>, LayoutError> {
    if polygon.len() < 3 {
        return Err(LayoutError::Lasso(polygon.len()));
    }
    Ok(points
        .iter()
        .filter(|p| contains(polygon, Point::new(p.x, p.y)))
        .map(|p| p.entity_id.clone())
        .collect())
}

/// Reads a UTF-8 CSV with header `entity_id,x,y`. Ids must be unique and
/// coordinates finite.
pub fn load_embedding<R: Read>(reader: R) -> Result<Vec<EmbeddingPoint>, LayoutError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| LayoutError::Embedding {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != EMBEDDING_HEADER {
        return Err(LayoutError::Embedding {
            line: 1,
            message: format!("expected header {:?}", EMBEDDING_HEADER.join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<EmbeddingPoint>().enumerate() {
        let line = i + 2;
        let p = rec.map_err(|e| LayoutError::Embedding {
            line,
            message: e.to_string(),
        })?;
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(LayoutError::Embedding {
                line,
                message: "coordinates must be finite".into(),
            });
        }
        if !seen.insert(p.entity_id.clone()) {
            return Err(LayoutError::Embedding {
                line,
                message: format!("duplicate entity id {:?}", p.entity_id),
            });
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(id: &str, x: f64, y: f64) -> EmbeddingPoint {
        EmbeddingPoint {
            entity_id: id.into(),
            x,
            y,
        }
    }

    #[test]
    fn unit_square() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let pts = [pt("in", 0.5, 0.5), pt("out", 2.0, 2.0), pt("edge", 1.0, 0.5)];
        assert_eq!(lasso_select(&pts, &sq).unwrap(), ["in", "edge"]);
        assert_eq!(lasso_select(&pts, &sq[..2]), Err(LayoutError::Lasso(2)));
    }

    #[test]
    fn embedding_csv() {
        let pts = load_embedding("entity_id,x,y\na,1.5,-2\nb,0,0\n".as_bytes()).unwrap();
        assert_eq!(pts, [pt("a", 1.5, -2.0), pt("b", 0.0, 0.0)]);
        let err = load_embedding("entity_id,x,y\na,1,2\na,3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LayoutError::Embedding { line: 3, .. }));
        assert!(load_embedding("id,x,y\n".as_bytes()).is_err());
        assert!(matches!(
            load_embedding("entity_id,x,y\na,zz,2\n".as_bytes()),
            Err(LayoutError::Embedding { line: 2, .. })
        ));
    }
}
