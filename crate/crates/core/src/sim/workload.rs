use super::SimError;

/// Named input streams of equal length.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Workload {
    pub names: Vec<String>,
    pub streams: Vec<Vec<u64>>,
}

impl Workload {
    pub fn new(names: Vec<String>, streams: Vec<Vec<u64>>) -> Result<Self, SimError> {
        if names.len() != streams.len() {
            return Err(SimError::Workload(format!(
                "{} names for {} streams",
                names.len(),
                streams.len()
            )));
        }
        if streams.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(SimError::UnequalStreams);
        }
        Ok(Workload { names, streams })
    }

    /// Builds streams from input vectors, naming them `in0`, `in1`, ...
    pub fn from_vectors(ports: usize, vectors: &[Vec<u64>]) -> Result<Self, SimError> {
        let mut streams = vec![Vec::with_capacity(vectors.len()); ports];
        for v in vectors {
            if v.len() != ports {
                return Err(SimError::StreamCount {
                    expected: ports,
                    found: v.len(),
                });
            }
            for (s, &x) in streams.iter_mut().zip(v) {
                s.push(x);
            }
        }
        Workload::new((0..ports).map(|k| format!("in{k}")).collect(), streams)
    }

    /// Number of input vectors.
    pub fn len(&self) -> usize {
        self.streams.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vector(&self, k: usize) -> Vec<u64> {
        self.streams.iter().map(|s| s[k]).collect()
    }

    /// One column per stream, decimal values.
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let names: Vec<String> = r
            .headers()
            .map_err(|e| SimError::Workload(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut streams = vec![Vec::new(); names.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| SimError::Workload(e.to_string()))?;
            if rec.len() != names.len() {
                return Err(SimError::UnequalStreams);
            }
            for (s, field) in streams.iter_mut().zip(rec.iter()) {
                let v = match field.strip_prefix('-') {
                    Some(neg) => neg.parse::<u64>().map(|x| x.wrapping_neg()),
                    None => field.parse::<u64>(),
                }
                .map_err(|_| {
                    SimError::Workload(format!("row {}: `{field}` is not an integer", line + 2))
                })?;
                s.push(v);
            }
        }
        Workload::new(names, streams)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.names).expect("in-memory write");
        for k in 0..self.len() {
            w.write_record(self.vector(k).iter().map(u64::to_string))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
    }
}
