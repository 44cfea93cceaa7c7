# Core package: accountant, channel, simulator, losses, diagnostics, verifier, engine, config
