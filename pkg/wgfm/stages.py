"""
wgfm - Pipeline Stages
Config-driven stages behind the command-line verbs (synthesize, image, verify,
psf) and the manifest recorder that listens to all of them.
"""
import math
import platform
from importlib import metadata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pydantic
import scipy

from config.build import (
    build_block_points,
    build_grid,
    build_measurement,
    build_quadrature,
    build_sampling,
    build_source,
    build_waveguide,
    true_support,
)
from config.schema import RunConfig
from config.settings import settings

from .base_stage import BaseStage
from .event_bus import Event, EventBus, EventType
from .imaging import (
    ImageField,
    ImagingError,
    IndicatorKind,
    Probe,
    SamplingGrid,
    hermitian_sqrt,
    image_fbsm,
    image_fm,
    probe_eval,
    probe_quadrature,
    psf,
    psf_quadrature,
    support_metrics,
)
from .media import (
    read_dataset,
    sha256_file,
    write_dataset,
    write_image_csv,
    write_json_atomic,
    write_matrix,
    write_metrics,
    write_pgm,
    write_profile,
)
from .mfop import (
    FarFieldMatrix,
    OperatorError,
    OperatorKind,
    assemble_alpha,
    assemble_backscatter,
    assemble_block,
    assemble_two_sided,
    alpha_coercivity,
    coercive_alpha,
    coercivity_constant,
    discrete_factors,
    dispersion_identity_error,
    self_adjoint_part,
    singular_values,
    verify_factorization,
)
from .modal import BoundaryKind, Waveguide, psi_n
from .synth import (
    DataSet,
    FrequencyGrid,
    add_noise,
    block_dataset,
    synthesize_alpha_dataset,
    synthesize_dataset,
)

DATA_FILES = {"left": "data_left.csv", "right": "data_right.csv", "block": "data_block.csv"}


def _distribution_version(name: str) -> str:
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "missing"


def versions() -> Dict[str, str]:
    from . import __version__

    return {
        "wgfm": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "pillow": _distribution_version("pillow"),
        "python-dotenv": _distribution_version("python-dotenv"),
        "colorama": _distribution_version("colorama"),
    }


class ManifestRecorder(BaseStage):
    """
    Collects every artifact and metric announced on the bus and writes
    manifest.json atomically when stopped.
    """

    def __init__(
        self,
        cfg: RunConfig,
        out_dir: Path,
        command: str,
        event_bus_instance: Optional[EventBus] = None,
    ):
        super().__init__(name="manifest", event_bus_instance=event_bus_instance)
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.command = command
        self.files: List[Dict[str, str]] = []
        self.metrics: Dict[str, Any] = {}
        self.checks: List[Dict[str, Any]] = []
        self.failures: List[str] = []

    async def _register_handlers(self) -> None:
        self.subscribe(EventType.ARTIFACT_WRITTEN, self._on_artifact)
        self.subscribe(EventType.METRIC_RECORDED, self._on_metrics)
        self.subscribe(EventType.CHECK_COMPLETED, self._on_check)
        self.subscribe(EventType.STAGE_FAILED, self._on_failure)

    async def _on_stop(self) -> None:
        await self.run()
        for event_type, handler in (
            (EventType.ARTIFACT_WRITTEN, self._on_artifact),
            (EventType.METRIC_RECORDED, self._on_metrics),
            (EventType.CHECK_COMPLETED, self._on_check),
            (EventType.STAGE_FAILED, self._on_failure),
        ):
            self.event_bus.unsubscribe(event_type, handler)

    def _on_artifact(self, event: Event) -> None:
        path = Path(event.data["path"])
        try:
            name = str(path.relative_to(self.out_dir))
        except ValueError:
            name = str(path)
        self.files.append({"path": name, "role": event.data["role"], "sha256": sha256_file(path)})

    def _on_metrics(self, event: Event) -> None:
        for key, value in event.data["metrics"].items():
            self.metrics[key] = _jsonable(value)

    def _on_check(self, event: Event) -> None:
        self.checks.append({k: _jsonable(v) for k, v in event.data.items()})

    def _on_failure(self, event: Event) -> None:
        self.failures.append(f"{event.source_stage}: {event.data.get('error')}")

    def manifest(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config_name": self.cfg.name,
            "config_hash": self.cfg.digest(),
            "seed": self.cfg.noise.seed,
            "versions": versions(),
            "files": self.files,
            "metrics": self.metrics,
            "checks": self.checks,
            "failures": self.failures,
        }

    async def run(self) -> Path:
        path = write_json_atomic(self.manifest(), self.out_dir / "manifest.json")
        self.logger.info("Manifest written to %s", path)
        return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    return value


class _ConfigStage(BaseStage):
    """Stage bound to one run configuration and output directory."""

    def __init__(
        self,
        name: str,
        cfg: RunConfig,
        out_dir: Path,
        event_bus_instance: Optional[EventBus] = None,
    ):
        super().__init__(name=name, event_bus_instance=event_bus_instance)
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.wg = build_waveguide(cfg)
        self.grid = build_grid(cfg, self.wg)
        self.quad = build_quadrature(cfg, self.wg)

    @property
    def sides(self) -> List[str]:
        if self.cfg.is_block:
            return ["block"]
        return [s for s in ("left", "right") if s in self.cfg.measurement.sides]


class SynthesisStage(_ConfigStage):
    """Writes the lattice data set(s) of a run."""

    def __init__(self, cfg: RunConfig, out_dir: Path, event_bus_instance: Optional[EventBus] = None):
        super().__init__("synthesize", cfg, out_dir, event_bus_instance)

    def build(self, noisy: bool = True) -> Dict[str, DataSet]:
        """Data sets keyed by side; noise seeds are seed, seed + 1 for left, right."""
        cfg = self.cfg
        datasets: Dict[str, DataSet] = {}
        if cfg.is_block:
            tx, rx = build_block_points(cfg)
            datasets["block"] = block_dataset(self.wg, cfg.block.x1, tx, rx, self.grid)
        else:
            src = build_source(cfg)
            for side in self.sides:
                xstar = build_measurement(cfg, side)
                if cfg.grid.alpha is not None:
                    datasets[side] = synthesize_alpha_dataset(
                        self.wg, src, xstar, self.grid, cfg.grid.alpha, self.quad
                    )
                else:
                    datasets[side] = synthesize_dataset(self.wg, src, xstar, self.grid, self.quad)

        if noisy and cfg.noise.delta > 0:
            for index, side in enumerate(list(datasets)):
                datasets[side] = add_noise(datasets[side], cfg.noise.delta, cfg.noise.seed + index)
        return datasets

    async def run(self) -> Dict[str, Path]:
        paths: Dict[str, Path] = {}
        for side, ds in self.build().items():
            path = write_dataset(ds, self.out_dir / DATA_FILES[side])
            paths[side] = await self.artifact(path, f"dataset.{side}")
            await self.metrics({
                f"dataset.{side}.samples": len(ds.samples),
                f"dataset.{side}.omega_min": float(ds.wavenumbers.min()),
                f"dataset.{side}.omega_max": float(ds.wavenumbers.max()),
            })
        return paths


def assemble_for_config(cfg: RunConfig, datasets: Dict[str, DataSet]) -> FarFieldMatrix:
    """The far-field matrix a run images with."""
    if cfg.is_block:
        return assemble_block(datasets["block"])
    if cfg.grid.alpha is not None:
        return assemble_alpha(datasets["left"], cfg.grid.alpha, cfg.grid.tau)
    if "right" in datasets:
        if "left" not in datasets:
            raise OperatorError("Two-sided imaging needs left data as well")
        return assemble_two_sided(datasets["left"], datasets["right"])
    return assemble_backscatter(datasets["left"], cfg.source.theta)


class ImagingStage(_ConfigStage):
    """Assembles the operator from data files and writes indicator images and metrics."""

    def __init__(
        self,
        cfg: RunConfig,
        out_dir: Path,
        data_paths: Optional[Sequence[Path]] = None,
        event_bus_instance: Optional[EventBus] = None,
    ):
        super().__init__("image", cfg, out_dir, event_bus_instance)
        self.data_paths = list(data_paths) if data_paths else None
        self.sampling: SamplingGrid = build_sampling(cfg, self.wg)

    def load(self) -> Dict[str, DataSet]:
        if self.data_paths is None:
            paths = {side: self.out_dir / DATA_FILES[side] for side in self.sides}
        else:
            if len(self.data_paths) != len(self.sides):
                raise ImagingError(
                    f"Expected {len(self.sides)} data file(s) for sides {self.sides}, "
                    f"got {len(self.data_paths)}"
                )
            paths = dict(zip(self.sides, self.data_paths))

        datasets = {}
        for side, path in paths.items():
            ds = read_dataset(path)
            if not ds.grid.matches(self.grid):
                raise OperatorError(f"{path}: frequency grid does not match the config grid")
            datasets[side] = ds
        return datasets

    def images(self, F: FarFieldMatrix) -> Dict[str, ImageField]:
        im = self.cfg.imaging
        # imaging uses the self-adjoint part whenever F is not Hermitian by construction
        F_sym = F if F.kind is OperatorKind.BACKSCATTER else self_adjoint_part(F, self.cfg.grid.tau)
        images = {}
        for kind in dict.fromkeys(im.indicators):
            if kind == IndicatorKind.FM.value:
                images[kind] = image_fm(F_sym, self.sampling, im.epsilon, im.rho)
            else:
                images[kind] = image_fbsm(F, self.sampling)
        return images

    async def run(self) -> Dict[str, Any]:
        F = assemble_for_config(self.cfg, self.load())
        await self.artifact(write_matrix(F, self.out_dir / "matrix.csv"), "matrix")

        svals = singular_values(F)
        results: Dict[str, Any] = {
            "matrix.hermitian_residual": F.hermitian_residual,
            "matrix.singular_ratio_10": float(svals[min(9, len(svals) - 1)] / svals[0]) if svals[0] > 0 else 0.0,
        }
        support = true_support(self.cfg)
        tol = self.cfg.imaging.support_tol
        if tol is None:
            tol = self.cfg.imaging.epsilon

        for kind, img in self.images(F).items():
            if "csv" in self.cfg.outputs.formats:
                await self.artifact(write_image_csv(img, self.out_dir / f"image_{kind}.csv"), f"image.{kind}")
            if "pgm" in self.cfg.outputs.formats:
                await self.artifact(write_pgm(img, self.out_dir / f"image_{kind}.pgm"), f"raster.{kind}")
            if support is not None:
                m = support_metrics(img, support, tol)
                results.update({
                    f"{kind}.argmax_z1": m.argmax_z1,
                    f"{kind}.argmax_inside": m.argmax_inside,
                    f"{kind}.contrast": m.contrast,
                    f"{kind}.half_max": m.half_max,
                    f"{kind}.jaccard": m.jaccard,
                })

        await self.artifact(write_metrics(results, self.out_dir / "metrics.txt"), "metrics")
        await self.metrics(results)
        return results


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    upper: bool = True


@dataclass
class VerificationReport:
    checks: List[CheckResult] = field(default_factory=list)
    info: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, value: float, threshold: float, upper: bool = True) -> CheckResult:
        """Record a check; upper=True means value <= threshold passes."""
        ok = value <= threshold if upper else value >= threshold
        result = CheckResult(name, float(value), float(threshold), bool(ok and math.isfinite(value)), upper)
        self.checks.append(result)
        return result

    def as_metrics(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for c in self.checks:
            out[f"{c.name}.value"] = c.value
            out[f"{c.name}.threshold"] = c.threshold
            out[f"{c.name}.passed"] = c.passed
        out.update(self.info)
        out["all_passed"] = self.passed
        return out


class VerificationStage(_ConfigStage):
    """Numerical checks of the identities the imaging methods rely on."""

    def __init__(self, cfg: RunConfig, out_dir: Path, event_bus_instance: Optional[EventBus] = None):
        super().__init__("verify", cfg, out_dir, event_bus_instance)

    def _check_dispersion(self, report: VerificationReport, count: int = 100_000) -> None:
        rng = np.random.default_rng(self.cfg.noise.seed)
        g = self.grid
        sigma = rng.uniform(g.k_minus, g.k_plus, count)
        gamma = rng.uniform(g.k_minus, g.k_plus, count)
        alpha = self.cfg.grid.alpha
        # lambda_1 is fixed by the config waveguide; near a zero shifted difference mu_1(omega)
        # loses digits to the rounding of omega, so those pairs are skipped
        if alpha is None:
            keep = np.abs(sigma - gamma) >= 0.05
        else:
            keep = np.abs(sigma - gamma + g.k_plus) >= 0.05
        error = dispersion_identity_error(self.wg, sigma[keep], gamma[keep], alpha)
        name = "dispersion" if alpha is None else "dispersion_alpha"
        report.add(name, error, settings.tol_dispersion)

    def _check_matrix(self, report: VerificationReport, F: FarFieldMatrix, label: str) -> None:
        if F.kind is OperatorKind.BACKSCATTER:
            scale = float(np.max(np.abs(F.entries))) or 1.0
            report.add(f"hermitian.{label}", F.hermitian_residual / scale, settings.tol_hermitian)

    def _check_eigen(self, report: VerificationReport, F: FarFieldMatrix) -> None:
        es = hermitian_sqrt(F)
        report.add("eigen.residual", es.residual(), settings.tol_eigen)
        report.add("eigen.orthonormality", es.orthonormality(), settings.tol_eigen)

    def _check_factorization(self, report: VerificationReport, F: FarFieldMatrix) -> None:
        cfg = self.cfg
        src = build_source(cfg)
        xstar = build_measurement(cfg, "left")
        kind = F.kind
        fac = discrete_factors(self.wg, src, xstar, self.grid, self.quad, kind, cfg.grid.alpha)
        if kind is not OperatorKind.BACKSCATTER:
            fac = replace(fac, tau=cfg.grid.tau)
        if cfg.verify.mismatch_theta:
            # negative control: rotate T by a quarter turn
            fac = replace(fac, t=fac.t * 1j)
        self_adjoint = kind is OperatorKind.ALPHA
        report.add("factorization", verify_factorization(F, fac, self_adjoint), settings.tol_factorization)

        quad = self.quad
        residuals = []
        for _ in range(cfg.verify.refinements):
            quad = quad.refined()
            finer = replace(
                discrete_factors(self.wg, src, xstar, self.grid, quad, kind, cfg.grid.alpha),
                tau=fac.tau,
            )
            residuals.append(verify_factorization(F, finer, self_adjoint))
        if residuals:
            report.info["factorization.refined"] = residuals

        if kind is OperatorKind.BACKSCATTER:
            c1 = min(abs(np.exp(1j * src.theta) * a) for a in src.amplitudes)
            bound = c1 * psi_n(self.wg, 1, xstar.xperp) / 2.0
            report.add("coercivity", coercivity_constant(fac), bound * (1 - 1e-12), upper=False)
        elif kind is OperatorKind.ALPHA:
            value = alpha_coercivity(self.wg, src, xstar, cfg.grid.alpha, cfg.grid.tau, self.quad)
            report.add("coercivity_alpha", value, 0.0, upper=False)
            try:
                report.info["alpha.smallest_coercive"] = coercive_alpha(
                    self.wg, src, xstar, cfg.verify.alpha_candidates, cfg.grid.tau, self.quad
                )
            except OperatorError as e:
                report.info["alpha.smallest_coercive"] = str(e)

    def _check_psf(self, report: VerificationReport) -> None:
        p = self.cfg.psf
        wg = Waveguide(p.height, BoundaryKind(p.boundary))
        grid = FrequencyGrid(p.k_minus, p.k_plus, 2)
        z = np.linspace(p.z1_min, p.z1_max, 41)
        closed = psf(wg, grid, z, p.y)
        quad = np.array([psf_quadrature(wg, grid, float(zi), p.y) for zi in z])
        report.add("psf", float(np.max(np.abs(closed - quad))), settings.tol_psf)

    def _check_probe(self, report: VerificationReport) -> None:
        error = 0.0
        sigma = self.grid.sigma
        x1 = -self.cfg.measurement.a if self.cfg.measurement else -1.0
        for eps in (self.cfg.imaging.epsilon, 0.1):
            for c in (1, 2):
                p = Probe(0.37, eps, x1, c)
                closed = probe_eval(p, sigma)
                quad = np.array([probe_quadrature(p, s) for s in sigma])
                error = max(error, float(np.max(np.abs(closed - quad))))
        report.add("probe", error, settings.tol_probe)

    def build_report(self) -> VerificationReport:
        report = VerificationReport()
        self._check_dispersion(report)

        synth = SynthesisStage(self.cfg, self.out_dir, self.event_bus)
        clean = synth.build(noisy=False)
        F = assemble_for_config(self.cfg, clean)
        self._check_matrix(report, F, "clean")
        if self.cfg.noise.delta > 0:
            noisy = synth.build(noisy=True)
            self._check_matrix(report, assemble_for_config(self.cfg, noisy), "noisy")
        self._check_eigen(report, F)
        if not self.cfg.is_block:
            self._check_factorization(report, F)
        self._check_psf(report)
        self._check_probe(report)
        return report

    async def run(self) -> VerificationReport:
        report = self.build_report()
        for c in report.checks:
            await self.emit(EventType.CHECK_COMPLETED, {
                "name": c.name, "value": c.value, "threshold": c.threshold, "passed": c.passed,
            })
            level = self.logger.info if c.passed else self.logger.warning
            level("%-24s %.3e (threshold %.1e) %s", c.name, c.value, c.threshold,
                  "ok" if c.passed else "FAILED")
        await self.artifact(write_metrics(report.as_metrics(), self.out_dir / "verify_report.txt"), "report")
        return report


class PsfStage(BaseStage):
    """Writes the normalized point-spread profile |S psi_z| over z1."""

    def __init__(self, cfg: RunConfig, out_dir: Path, event_bus_instance: Optional[EventBus] = None):
        super().__init__(name="psf", event_bus_instance=event_bus_instance)
        self.cfg = cfg
        self.out_dir = Path(out_dir)

    def profile(self):
        p = self.cfg.psf
        wg = Waveguide(p.height, BoundaryKind(p.boundary))
        grid = FrequencyGrid(p.k_minus, p.k_plus, 2)
        z = np.linspace(p.z1_min, p.z1_max, p.n)
        magnitude = np.abs(psf(wg, grid, p.y[0] + z, p.y))
        return z, magnitude / magnitude.max()

    @staticmethod
    def first_zero(z: np.ndarray, values: np.ndarray) -> float:
        """First local minimum of the profile at positive offset."""
        for i in range(1, len(z) - 1):
            if z[i] > 0 and values[i] <= values[i - 1] and values[i] <= values[i + 1]:
                return float(z[i])
        return math.nan

    async def run(self) -> Path:
        z, values = self.profile()
        path = await self.artifact(write_profile(z, values, self.out_dir / "psf.csv"), "psf")
        peak = int(np.argmax(values))
        await self.metrics({
            "psf.peak_z1": float(z[peak]),
            "psf.first_zero": self.first_zero(z, values),
            "psf.step": float(z[1] - z[0]),
        })
        return path


STAGES = {
    "synthesize": SynthesisStage,
    "image": ImagingStage,
    "verify": VerificationStage,
    "psf": PsfStage,
}


async def run_command(
    command: str,
    cfg: RunConfig,
    out_dir: Path,
    data_paths: Optional[Sequence[Path]] = None,
    event_bus_instance: Optional[EventBus] = None,
) -> Any:
    """
    Run one verb with a manifest recorder attached.

    Returns:
        The stage result (paths, metrics or a VerificationReport)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recorder = ManifestRecorder(cfg, out_dir, command, event_bus_instance)
    if command == "image":
        stage = ImagingStage(cfg, out_dir, data_paths, event_bus_instance)
    else:
        stage = STAGES[command](cfg, out_dir, event_bus_instance)

    await recorder.start()
    await stage.start()
    try:
        return await stage.run()
    except Exception as e:
        await stage.emit(EventType.STAGE_FAILED, {"error": str(e)})
        raise
    finally:
        await stage.stop()
        await recorder.stop()
