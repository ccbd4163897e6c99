use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use disimo_core::audio::{synthesize_guide, write_wav, GuideSpec};
use disimo_core::device::DeviceConfig;
use disimo_core::heartsim::{generate_beats, HeartModel};
use disimo_core::hrv::write_rr_stream;
use disimo_core::Rgb;
use disimo_service::host::{run_networked, DeviceHost, HeartSource, NetworkOptions};
use disimo_service::scenario::{self, RunOptions, Scenario};
use disimo_service::server::{HubConfig, HubServer};
use disimo_service::{Result, ServiceError};

#[derive(Parser)]
#[command(name = "disimo", version, about = "Ambient biofeedback simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the session hub.
    Hub {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        /// Also accept WebSocket clients on this port.
        #[arg(long)]
        ws_port: Option<u16>,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
    },
    /// Run one simulated device against a hub; prints its trace as NDJSON.
    Device {
        #[arg(long, default_value = "127.0.0.1:7878")]
        hub: String,
        #[arg(long)]
        id: String,
        /// R,G,B
        #[arg(long)]
        color: Rgb,
        /// `synth:hr=..,breath=..,coupling=..,seed=..` or `file:PATH`
        #[arg(long, default_value = "synth")]
        source: String,
        #[arg(long, default_value_t = 1.0)]
        tick_hz: f64,
        #[arg(long)]
        session: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        accelerate: f64,
        /// Stop after this many simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Seconds of Low HRV before a reminder.
        #[arg(long)]
        low_trigger: Option<f64>,
    },
    /// Replay a scripted multi-user session.
    Scenario {
        file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        accelerate: f64,
        /// Write the NDJSON trace here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write each reminded user's guide audio here.
        #[arg(long)]
        wav_dir: Option<PathBuf>,
    },
    /// Render the breathing guide to a WAV file.
    SynthGuide {
        #[arg(long, default_value_t = 4)]
        cycles: u32,
        #[arg(long, default_value_t = 44_100)]
        sample_rate: u32,
        #[arg(long, default_value_t = 0.3)]
        gain: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, default_value = "guide.wav")]
        output: PathBuf,
    },
    /// Write synthetic beats as an RR stream.
    SynthBeats {
        #[arg(long, default_value = "synth")]
        source: String,
        #[arg(long)]
        duration: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DISIMO_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("disimo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Hub { port, ws_port, bind } => runtime()?.block_on(async {
            let cfg = HubConfig {
                tcp: SocketAddr::new(bind, port),
                ws: ws_port.map(|p| SocketAddr::new(bind, p)),
                journal: false,
            };
            let server = HubServer::start(cfg)
                .await
                .map_err(|e| ServiceError::Connect(format!("cannot listen: {e}")))?;
            eprintln!(
                "hub on {}{}",
                server.tcp_addr(),
                server.ws_addr().map(|a| format!(", websocket on {a}")).unwrap_or_default()
            );
            tokio::select! {
                _ = server.wait() => {}
                _ = tokio::signal::ctrl_c() => {}
            }
            Ok(())
        }),
        Cmd::Device { hub, id, color, source, tick_hz, session, accelerate, duration, low_trigger } => {
            let mut cfg = DeviceConfig::with_color(color);
            if let Some(lt) = low_trigger {
                cfg.low_trigger = lt;
            }
            let host = DeviceHost::new(id, cfg, HeartSource::parse(&source)?)?;
            let opts = NetworkOptions { hub, session, tick_hz, accelerate, duration, ..Default::default() };
            runtime()?.block_on(async {
                let stdout = std::io::stdout();
                run_networked(host, opts, |entry| {
                    let mut out = stdout.lock();
                    let _ = serde_json::to_writer(&mut out, entry);
                    let _ = writeln!(out);
                })
                .await
            })
        }
        Cmd::Scenario { file, accelerate, trace, wav_dir } => {
            let sc = Scenario::load(&file)?;
            let out = scenario::run(&sc, &RunOptions { accelerate, wav_dir })?;
            let text = out.trace_text();
            match trace {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| ServiceError::BadInput(format!("{}: {e}", path.display())))?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            if let Some(s) = out.final_snapshot() {
                eprintln!(
                    "final snapshot: color {} brightness {:.3} ({}/{} active)",
                    s.color.to_hex(),
                    s.brightness,
                    s.active_count,
                    s.member_count
                );
            }
            Ok(())
        }
        Cmd::SynthGuide { cycles, sample_rate, gain, seed, output } => {
            let spec = GuideSpec { cycles, sample_rate, peak_gain: gain, seed, ..Default::default() };
            let report = write_wav(&synthesize_guide(&spec)?, sample_rate, &output)?;
            eprintln!("wrote {} samples to {}", report.samples, output.display());
            Ok(())
        }
        Cmd::SynthBeats { source, duration, output } => {
            if !(duration.is_finite() && duration > 0.0) {
                return Err(ServiceError::BadInput(format!("duration {duration} must be positive")));
            }
            let model = HeartModel::from_descriptor(&source)?;
            let beats = generate_beats(&model, duration);
            let file = std::fs::File::create(&output)
                .map_err(|e| ServiceError::BadInput(format!("{}: {e}", output.display())))?;
            write_rr_stream(&beats, std::io::BufWriter::new(file))?;
            Ok(())
        }
    }
}
