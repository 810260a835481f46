import sys

from qdlearn.cli import main

sys.exit(main())
