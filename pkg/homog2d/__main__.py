from homog2d.cli.main import main

raise SystemExit(main())
