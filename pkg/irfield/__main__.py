from irfield.cli import main

main()
