import logging
import sys

import config_simulation
from cli import run_command

logger = logging.getLogger(__name__)

# Point d'entrée : python app.py <sous-commande> ...
if __name__ == "__main__":
    config_simulation.configure_logging()
    logger.info("Démarrage (processus=%s, garde-fou=%s, sortie=%s)",
                config_simulation.get_jobs(), config_simulation.get_safeguard(),
                config_simulation.get_output_dir())
    sys.exit(run_command(sys.argv[1:]))
