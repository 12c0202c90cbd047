use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use nucleus_core::Session;

pub fn run(folder: &Path, host: IpAddr, port: u16, alpha: f64, ui: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let session = Session::open(folder, alpha).with_context(|| format!("cannot open session in {}", folder.display()))?;
    if let Some(dir) = &ui {
        anyhow::ensure!(dir.is_dir(), "UI directory {} does not exist", dir.display());
    }
    let runtime = tokio::runtime::Runtime::new().context("cannot start runtime")?;
    runtime.block_on(async move {
        let addr = SocketAddr::new(host, port);
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
        let bound = listener.local_addr()?;
        println!("listening on http://{bound}");
        let summary = session.summary();
        eprintln!(
            "{}: {} images, {} pending, alpha {}",
            folder.display(),
            summary.image_count,
            summary.pending,
            summary.default_alpha
        );
        let app = nucleus_service::router(session, ui);
        nucleus_service::serve(listener, app, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("server failed")?;
        Ok(ExitCode::SUCCESS)
    })
}
