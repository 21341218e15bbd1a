class LogMessages:
    # Matrix kernels
    MATOPS_ASYMMETRIC = "⚠️  [matops] {name} is not symmetric (max gap {gap:.3e}), symmetrizing"
    MATOPS_RESIDUAL = "⚠️  [matops] Lyapunov residual {residual:.3e} above bound {bound:.3e}"

    # Game model
    GAME_INITIAL_POLICY = "[InitialPolicy] Certified initial gain from shift {shift}: {gain}"
    GAME_INITIAL_CONTINUATION = "[InitialPolicy] Certified initial gain by lowering the attenuation level from {start:g} to {gamma:g} in {steps} steps: {gain}"

    # Policy iteration
    PI_START = "[{label}] Starting two-loop policy iteration"
    PI_OUTER_STEP = "[{label}] Outer k={k}: {inner} inner iterations, outer step {step:.3e}"
    PI_CONVERGED = "✅ [{label}] Converged after {outer} outer / {inner} inner iterations"
    PI_INNER_CAP = "[{label}] Inner loop k={k} hit the cap of {cap} iterations"
    PI_OUTER_CAP = "[{label}] Outer loop hit the cap of {cap} iterations"
    PI_STOPPED = "⚠️  [{label}] Run ended early ({reason}): {error}"
    PI_INIT_INEQUALITY = "⚠️  [model_based] Initialization inequality violated by initial_Pu (largest eigenvalue {gap:.3e})"
    PI_GARE_RESIDUAL = "⚠️  [model_based] GARE residual {residual:.3e} above bound {bound:.3e}"
    PI_GARE_OK = "[model_based] GARE residual {residual:.3e}"

    # Model-free
    ADP_RANK_OK = "[model_free] Rank condition satisfied: rank {rank} from {rows} data rows"

    # Robust
    ROBUST_RUN_DONE = "[robust] mode={mode} magnitude={magnitude:g} seed={seed}: {termination}, final error {error:.3e}"
    ROBUST_SWEEP_START = "[robust] ISS sweep: {runs} runs ({mode}) on {workers} worker(s)"
    ROBUST_EXCLUDED = "⚠️  [robust] Excluding diverged run magnitude={magnitude:g} seed={seed} ({termination})"
    ROBUST_NOT_MONOTONE = "⚠️  [robust] ISS envelope is not monotone: {table}"
    ROBUST_NOT_VANISHING = "⚠️  [robust] ISS envelope does not vanish: error {error:.3e} at the smallest magnitude {magnitude:g}"

    # Simulator
    SIM_COLLECT_START = "[Simulator] Collecting data: {paths} paths x {intervals} intervals x {substeps} substeps ({batches} batches, {workers} worker(s))"
    SIM_COLLECT_DONE = "   ✓ Data moments ready: {rows} rows for {unknowns} unknowns"
    SIM_BLOW_UP = "State norm {norm:.3e} at t={t:.4f} exceeds {limit:.1e}; behavior policy is destabilizing"
    SIM_CLOSED_LOOP = "[Simulator] Closed loop over T={horizon}: E|X(T)|^2 / |x0|^2 = {ratio:.4e}"

    # Results
    WRITER_CSV = "   ✓ Wrote {rows} rows to {path}"
    WRITER_FILE = "   ✓ Wrote {path}"

    # Pipeline
    PIPELINE_INIT = "=" * 70 + "\n🚀 INITIALIZING EXPERIMENT PIPELINE ({mode})\n" + "=" * 70
    PIPELINE_READY = "=" * 70 + "\n✅ RUN COMPLETE: {path}\n" + "=" * 70
    PIPELINE_REFERENCE = "[Pipeline] -> Computing model-based reference"
    PIPELINE_COLLECT = "[Pipeline] -> Collecting behavior data (seed {seed})"
    PIPELINE_DATA_FILE = "[Pipeline] -> Loading data moments from {path}"
    PIPELINE_MODEL_FREE = "[Pipeline] -> Model-free iteration (system matrices withheld)"
    PIPELINE_ROBUST = "[Pipeline] -> Robust sweep over magnitudes {magnitudes} and seeds {seeds}"
    PIPELINE_CHECK = "[Pipeline] Check {name}: {result}"

    # Runner
    RUNNER_CONFIG_OK = "✅ Config {path} is valid ({mode})"
    RUNNER_EXAMPLES_WRITTEN = "✅ Wrote example config {path}"
    RUNNER_VALIDATION_ERROR = "❌ Invalid configuration: {error}"
    RUNNER_RUNTIME_ERROR = "❌ Run failed: {error}"
