//! Plain-text pulse table: one row per segment,
//! `index,duration_ms,<channel>_amp_hz,<channel>_phase_deg,...` with a header
//! line. Phases are printed at 6 decimal places; an export/import round trip
//! reproduces the file byte for byte.

use crate::bb::{BBSequence, ChannelPulse, Segment};
use crate::error::{Error, Result};

/// Serialize a sequence against the channel labels and full-power amplitudes
/// of its spin system. Inactive channels print amplitude 0.
pub fn format_pulse_table(
    seq: &BBSequence,
    channel_labels: &[String],
    amplitudes_hz: &[f64],
) -> Result<String> {
    if channel_labels.len() != seq.nchannels() || amplitudes_hz.len() != seq.nchannels() {
        return Err(Error::PulseTable(format!(
            "channel count mismatch: sequence has {}, labels {}, amplitudes {}",
            seq.nchannels(),
            channel_labels.len(),
            amplitudes_hz.len()
        )));
    }
    let mut out = String::from("index,duration_ms");
    for label in channel_labels {
        out.push_str(&format!(",{label}_amp_hz,{label}_phase_deg"));
    }
    out.push('\n');
    let dur_ms = seq.dt() * 1e3;
    for (i, seg) in seq.segments().iter().enumerate() {
        out.push_str(&format!("{i},{dur_ms:.6}"));
        for (k, c) in seg.channels().iter().enumerate() {
            let amp = if c.active { amplitudes_hz[k] } else { 0.0 };
            let deg = c.phase.to_degrees();
            out.push_str(&format!(",{amp:.6},{deg:.6}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parsed pulse table: the sequence plus the channel labels and amplitudes
/// found in the file, for validation against a spin-system configuration.
pub struct ParsedPulseTable {
    pub sequence: BBSequence,
    pub channel_labels: Vec<String>,
    pub amplitudes_hz: Vec<f64>,
}

pub fn parse_pulse_table(text: &str) -> Result<ParsedPulseTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::PulseTable("empty pulse table".into()))?;
    let cols: Vec<&str> = header.split(',').map(|s| s.trim()).collect();
    if cols.len() < 4 || cols[0] != "index" || cols[1] != "duration_ms" {
        return Err(Error::PulseTable(format!(
            "bad header '{header}': expected 'index,duration_ms,<channel>_amp_hz,<channel>_phase_deg,...'"
        )));
    }
    if (cols.len() - 2) % 2 != 0 {
        return Err(Error::PulseTable(
            "header must pair amp/phase columns per channel".into(),
        ));
    }
    let nch = (cols.len() - 2) / 2;
    let mut labels = Vec::with_capacity(nch);
    for k in 0..nch {
        let amp_col = cols[2 + 2 * k];
        let ph_col = cols[3 + 2 * k];
        let label = amp_col.strip_suffix("_amp_hz").ok_or_else(|| {
            Error::PulseTable(format!("column '{amp_col}' is not a *_amp_hz column"))
        })?;
        let ph_label = ph_col.strip_suffix("_phase_deg").ok_or_else(|| {
            Error::PulseTable(format!("column '{ph_col}' is not a *_phase_deg column"))
        })?;
        if label != ph_label {
            return Err(Error::PulseTable(format!(
                "mismatched channel columns '{amp_col}' / '{ph_col}'"
            )));
        }
        labels.push(label.to_string());
    }

    let mut dt = None;
    let mut amplitudes: Vec<Option<f64>> = vec![None; nch];
    let mut segments = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if fields.len() != cols.len() {
            return Err(Error::PulseTable(format!(
                "row {row}: {} fields, expected {}",
                fields.len(),
                cols.len()
            )));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| Error::PulseTable(format!("row {row}: bad index '{}'", fields[0])))?;
        if idx != row {
            return Err(Error::PulseTable(format!(
                "row {row}: non-contiguous index {idx}"
            )));
        }
        let dur_ms: f64 = fields[1]
            .parse()
            .map_err(|_| Error::PulseTable(format!("row {row}: bad duration '{}'", fields[1])))?;
        let this_dt = dur_ms * 1e-3;
        match dt {
            None => dt = Some(this_dt),
            Some(d) if (d - this_dt).abs() > 1e-12 => {
                return Err(Error::PulseTable(format!(
                    "row {row}: duration {dur_ms} ms differs from previous rows"
                )));
            }
            _ => {}
        }
        let mut pulses = Vec::with_capacity(nch);
        for k in 0..nch {
            let amp: f64 = fields[2 + 2 * k].parse().map_err(|_| {
                Error::PulseTable(format!("row {row}: bad amplitude '{}'", fields[2 + 2 * k]))
            })?;
            let deg: f64 = fields[3 + 2 * k].parse().map_err(|_| {
                Error::PulseTable(format!("row {row}: bad phase '{}'", fields[3 + 2 * k]))
            })?;
            let active = amp > 0.0;
            if active {
                match amplitudes[k] {
                    None => amplitudes[k] = Some(amp),
                    Some(a) if (a - amp).abs() > 1e-9 => {
                        return Err(Error::PulseTable(format!(
                            "row {row}: channel {} amplitude {amp} Hz differs from {a} Hz; \
                             bang-bang tables carry a single full-power amplitude per channel",
                            labels[k]
                        )));
                    }
                    _ => {}
                }
            }
            pulses.push(if active {
                ChannelPulse::bang(deg.to_radians())
            } else {
                ChannelPulse::silent()
            });
        }
        segments.push(Segment::new(pulses));
    }
    let dt = dt.ok_or_else(|| Error::PulseTable("pulse table has no segments".into()))?;
    let sequence = BBSequence::new(dt, nch, segments)?;
    Ok(ParsedPulseTable {
        sequence,
        channel_labels: labels,
        amplitudes_hz: amplitudes
            .into_iter()
            .map(|a| a.unwrap_or(0.0))
            .collect(),
    })
}
