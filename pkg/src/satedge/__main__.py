from satedge.cli import main

raise SystemExit(main())
