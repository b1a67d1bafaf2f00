"""Put the project root on sys.path so config/, core/, utils/ and ui/ import as top-level packages."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
