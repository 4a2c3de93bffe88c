# stap-glm - Bayesian spatial-temporal aggregated predictor regression
# Copyright (C) 2026 stap-glm contributors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
from typing import List
from concurrent.futures import ProcessPoolExecutor
import asyncio
import logging
import time

from stapcore.model import ModelContext
from stapcore.nuts import ChainOutput, SamplerConfig, sample_chain


class ChainRunner:
    """Samples every chain, in worker processes when more than one core is configured.

    Chains only share the read-only model context; each has its own counter-based random stream,
    so the draws do not depend on how chains are scheduled.
    """

    log: logging.Logger = logging.getLogger("stap.runner")

    ctx: ModelContext
    config: SamplerConfig

    def __init__(self, ctx: ModelContext, config: SamplerConfig) -> None:
        self.ctx = ctx
        self.config = config

    async def run(self) -> List[ChainOutput]:
        start = time.monotonic()
        workers = min(self.config.cores, self.config.chains)
        self.log.info(
            "Sampling %d chains on %d core(s) with seed %d",
            self.config.chains, workers, self.config.seed,
        )
        if workers == 1:
            chains = [
                sample_chain(self.ctx, self.config, chain_id)
                for chain_id in range(self.config.chains)
            ]
        else:
            loop = asyncio.get_running_loop()
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chains = await asyncio.gather(
                    *(
                        loop.run_in_executor(pool, sample_chain, self.ctx, self.config, chain_id)
                        for chain_id in range(self.config.chains)
                    )
                )
        self.log.info("Sampling finished in %.1f seconds", time.monotonic() - start)
        return list(chains)

    def run_sync(self) -> List[ChainOutput]:
        return asyncio.run(self.run())
